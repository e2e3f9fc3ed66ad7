"""Bounded memory-safety checking by exhaustive enumeration."""
from .program import Program, ProgramError, build_program
from .report import (
    REPORT_SCHEMA, FileCoverage, ResourceBudget, UncoveredBlock, VerificationReport, Witness,
    coverage_report, uncovered_blocks,
)
from .semantics import ALL_KINDS, CHECK_KINDS, DomainConfig, PropertyCheck, instrument
from .unroll import unroll
from .verify import explore, replay, verify, verify_program

__all__ = [
    "Program", "ProgramError", "build_program", "REPORT_SCHEMA", "FileCoverage",
    "ResourceBudget", "UncoveredBlock", "VerificationReport", "Witness", "coverage_report",
    "uncovered_blocks", "ALL_KINDS", "CHECK_KINDS", "DomainConfig", "PropertyCheck",
    "instrument", "unroll", "explore", "replay", "verify", "verify_program",
]
