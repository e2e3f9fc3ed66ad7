"""soupgen: unit-proof generation for MiniC components.

The pipeline picks a verification scope, tunes loop bounds and environment
models, and infers preconditions that it checks against real calling code.
"""
from .engine import DomainConfig, ResourceBudget, VerificationReport, verify
from .pipeline import generate, match_exposure, verify_proof
from .proof import UnitProof, parse_manifest, serialize_manifest

__version__ = "0.1.0"

__all__ = [
    "DomainConfig", "ResourceBudget", "VerificationReport", "verify", "generate",
    "match_exposure", "verify_proof", "UnitProof", "parse_manifest", "serialize_manifest",
]
