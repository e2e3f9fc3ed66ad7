"""MiniC frontend: parsing, indexing, call graph, type checking."""
from .index import (
    CallGraph,
    ProjectError,
    ProjectIndex,
    build_call_graph,
    build_index,
    callsites_of,
    parse_project,
    pick_definition,
)
from .parser import MiniCSyntaxError, parse_function_source, parse_source
from .printer import function_str, unit_str

__all__ = [
    "CallGraph", "ProjectError", "ProjectIndex", "MiniCSyntaxError",
    "build_call_graph", "build_index", "callsites_of", "parse_project",
    "pick_definition", "parse_source", "parse_function_source",
    "function_str", "unit_str",
]
