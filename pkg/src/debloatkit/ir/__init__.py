"""The load/store IR: model, text format, and validator."""

from .model import (
    BYTE, INT, INTRINSICS, STR, WRITING_INTRINSICS, Arr, BasicBlock, Byte,
    ByteVal, ConstValue, DuplicateNeck, FuncRef, Function, GlobalDef, GlobalRef,
    Instruction, Int, IntVal, IRError, Label, NullPtr, Program, Ptr, Reg, Str,
    StrVal, StructDef, StructRef, TypeExpr, UnknownInstId, field_offset,
    insert_neck_marker, is_pointerish, is_scalar, renumber, scalar_cells,
    size_of,
)
from .parser import IRSyntaxError, ResolutionError, parse_program, parse_type
from .printer import print_program
from .validate import NULL_T, Diagnostic, compatible, register_types, validate

__all__ = [
    "BYTE", "INT", "INTRINSICS", "STR", "WRITING_INTRINSICS", "Arr", "BasicBlock",
    "Byte", "ByteVal", "ConstValue", "Diagnostic", "DuplicateNeck", "FuncRef",
    "Function", "GlobalDef", "GlobalRef", "IRError", "IRSyntaxError", "Instruction",
    "Int", "IntVal", "Label", "NULL_T", "NullPtr", "Program", "Ptr", "Reg",
    "ResolutionError", "Str", "StrVal", "StructDef", "StructRef", "TypeExpr",
    "UnknownInstId", "compatible", "field_offset", "insert_neck_marker",
    "is_pointerish", "is_scalar", "parse_program", "parse_type", "print_program",
    "register_types", "renumber", "scalar_cells", "size_of", "validate",
]
