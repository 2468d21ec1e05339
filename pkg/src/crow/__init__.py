"""Diversification toolkit for a WebAssembly text-format subset."""

__version__ = "0.1.0"

from .wat import Instr, FuncDef, GlobalDef, Module, ParseError, UnsupportedError
from .wat import parse_module, print_module, validate

__all__ = [
    "Instr",
    "FuncDef",
    "GlobalDef",
    "Module",
    "ParseError",
    "UnsupportedError",
    "parse_module",
    "print_module",
    "validate",
]
