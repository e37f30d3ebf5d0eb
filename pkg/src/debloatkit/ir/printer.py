"""Canonical printer for the textual IR.

Output order is structs, globals, then functions, each section separated by
a blank line.  A non-empty program ends with exactly one newline; the empty
program prints as the empty string.
"""

from __future__ import annotations

from .model import Function, Program


def _print_function(f: Function) -> list[str]:
    params = ", ".join(f"%{name}: {ty}" for name, ty in f.params)
    head = f"fn @{f.name}({params})"
    if f.ret is not None:
        head += f" -> {f.ret}"
    lines = [head + " {"]
    for b in f.blocks:
        lines.append(f"{b.label}:")
        lines.extend(f"  {inst}" for inst in b.insts)
    lines.append("}")
    return lines


def print_program(p: Program) -> str:
    sections: list[list[str]] = []
    if p.structs:
        sections.append([
            f"struct {s.name} {{ {', '.join(str(t) for t in s.fields)} }}" for s in p.structs
        ])
    if p.globals:
        sections.append([f"global @{g.name} : {g.type} = {g.init}" for g in p.globals])
    for f in p.functions:
        sections.append(_print_function(f))
    if not sections:
        return ""
    return "\n\n".join("\n".join(sec) for sec in sections) + "\n"
