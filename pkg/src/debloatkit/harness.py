"""Differential testing of original vs. specialized programs, and IR size
metrics."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .interp import DEFAULT_STEP_BUDGET, Invocation, RunOutcome, execute
from .ir.model import Program

PRINTABLE = bytes([0x09]) + bytes(range(0x20, 0x7F))


@dataclass(frozen=True)
class SizeStats:
    ir_insts: int
    funcs: int
    basic_blocks: int
    globals: int

    def as_dict(self) -> dict:
        return {"irInsts": self.ir_insts, "funcs": self.funcs,
                "basicBlocks": self.basic_blocks, "globals": self.globals}


METRICS = ("irInsts", "funcs", "basicBlocks", "globals")


def stats(p: Program) -> SizeStats:
    return SizeStats(
        ir_insts=sum(len(b.insts) for f in p.functions for b in f.blocks),
        funcs=len(p.functions),
        basic_blocks=sum(len(f.blocks) for f in p.functions),
        globals=len(p.globals),
    )


def reduction_report(before: SizeStats, after: SizeStats) -> dict:
    """Percentage reduction per metric; metrics with a zero baseline are omitted."""
    b, a = before.as_dict(), after.as_dict()
    return {k: 100.0 * (b[k] - a[k]) / b[k] for k in METRICS if b[k] > 0}


@dataclass(frozen=True)
class Extension:
    """Delayed inputs appended to the supplied ones for a single trial."""
    stdin: bytes = b""
    extra_args: tuple = ()


@dataclass
class Mismatch:
    trial: int
    invocation: Invocation
    original: RunOutcome
    specialized: RunOutcome

    def as_dict(self) -> dict:
        return {
            "trial": self.trial,
            "invocation": {"args": list(self.invocation.args),
                           "stdin": self.invocation.stdin.decode("latin-1")},
            "originalOutcome": self.original.as_dict(),
            "specializedOutcome": self.specialized.as_dict(),
        }


@dataclass
class DiffReport:
    trials: int
    mismatches: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "Pass" if not self.mismatches else "Fail"

    def as_dict(self) -> dict:
        return {"trials": self.trials, "verdict": self.verdict,
                "mismatches": [m.as_dict() for m in self.mismatches]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def _same(a: RunOutcome, b: RunOutcome) -> bool:
    if a.trap or b.trap:
        return a.trap == b.trap
    return a.stdout == b.stdout and a.exit_status == b.exit_status


def diff_run(orig: Program, spec: Program, supplied_args, extensions, config: bytes = b"",
             step_budget: int = DEFAULT_STEP_BUDGET) -> DiffReport:
    report = DiffReport(trials=len(extensions))
    for k, ext in enumerate(extensions):
        if isinstance(ext, (bytes, bytearray)):
            ext = Extension(bytes(ext))
        inv = Invocation(tuple(supplied_args) + tuple(ext.extra_args), ext.stdin, config, step_budget)
        a, b = execute(orig, inv), execute(spec, inv)
        if not _same(a, b):
            report.mismatches.append(Mismatch(k, inv, a, b))
    return report


def random_delayed_inputs(seed: int, n: int, profile: str = "text") -> list[Extension]:
    """Deterministic stdin contents for ``n`` trials."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        if profile == "text":
            lines = []
            for _ in range(rng.randint(0, 50)):
                lines.append(bytes(rng.choice(PRINTABLE) for _ in range(rng.randint(0, 80))))
            data = b"\n".join(lines)
            if lines and rng.random() < 0.7:
                data += b"\n"
        elif profile == "bytes":
            data = bytes(rng.randrange(1, 256) for _ in range(rng.randint(0, 400)))
        else:
            raise ValueError(f"unknown profile {profile!r}")
        out.append(Extension(data))
    return out
