"""MSWasm core IR: syntax, text format and validator."""

from .syntax import (
    HANDLE, I32, I64, FuncDef, FuncType, Import, Instr, ModuleDef, ValType, ins,
)
from .text import ParseError, parse_module, serialize_module
from .validate import TypedModule, TypeError_, ValidationError, check_module, validate

__all__ = [
    "HANDLE", "I32", "I64", "FuncDef", "FuncType", "Import", "Instr", "ModuleDef",
    "ValType", "ins", "ParseError", "parse_module", "serialize_module", "TypedModule",
    "TypeError_", "ValidationError", "check_module", "validate",
]
