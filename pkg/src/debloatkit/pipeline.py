"""End-to-end specialization: mine the neck, run to it, convert, simplify."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .constconv import ConversionPlan, apply_conversion, plan_conversion
from .harness import SizeStats, reduction_report, stats
from .interp import DEFAULT_STEP_BUDGET, PartialState, run_to_neck, state_to_json
from .ir.model import Program
from .ir.validate import validate
from .neck_miner import MinerConfig, NeckReport, ProgramCategory, mine_neck
from .simplify import run_simplify

CONFIG_KEYS = ("category", "parseApis", "suppliedArgs", "stepBudget", "seed", "trials", "configInput")


class PipelineError(Exception):
    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"{phase}: {cause}")
        self.phase = phase
        self.cause = cause


@dataclass
class PipelineConfig:
    category: str = "cli"
    parse_apis: list = field(default_factory=lambda: ["read_cfg_line"])
    supplied_args: list = field(default_factory=list)
    step_budget: int = DEFAULT_STEP_BUDGET
    seed: int = 0
    trials: int = 100
    config_input: str = ""  # contents of the configuration stream

    def miner(self) -> MinerConfig:
        return MinerConfig(ProgramCategory(self.category), tuple(self.parse_apis))

    def to_json(self) -> dict:
        return {"category": self.category, "parseApis": list(self.parse_apis),
                "suppliedArgs": list(self.supplied_args), "stepBudget": self.step_budget,
                "seed": self.seed, "trials": self.trials, "configInput": self.config_input}

    @classmethod
    def from_json(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - set(CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, attr in zip(CONFIG_KEYS, ("category", "parse_apis", "supplied_args", "step_budget",
                                           "seed", "trials", "config_input")):
            if key in d:
                kw[attr] = d[key]
        cfg = cls(**kw)
        ProgramCategory(cfg.category)
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class DebloatReport:
    neck: NeckReport
    state: PartialState
    plan: ConversionPlan
    passes: list
    before: SizeStats
    after: SizeStats

    @property
    def reduction(self) -> dict:
        return reduction_report(self.before, self.after)

    def as_dict(self) -> dict:
        return {
            "neck": self.neck.as_dict(),
            "partialState": state_to_json(self.state),
            "conversion": self.plan.as_dict(),
            "passes": [r.as_dict() for r in self.passes],
            "sizeBefore": self.before.as_dict(),
            "sizeAfter": self.after.as_dict(),
            "reductionPercent": {k: round(v, 2) for k, v in self.reduction.items()},
            "metricsNote": "IR metrics stand in for binary size and gadget counts",
        }


def _phase(name: str, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # tag with the phase that failed
        raise PipelineError(name, exc) from exc


def specialize(necked: Program, cfg: PipelineConfig) -> tuple[Program, PartialState, ConversionPlan, list]:
    """Run the phases after neck mining on an already-necked program."""
    st = _phase("interpret", run_to_neck, necked, cfg.supplied_args,
                cfg.config_input.encode("latin-1"), cfg.step_budget)
    plan = _phase("convert", plan_conversion, necked, st)
    converted = _phase("convert", apply_conversion, necked, plan)
    out, passes = _phase("simplify", run_simplify, converted, st.visited_funcs)
    return out, st, plan, passes


def debloat_pipeline(p: Program, cfg: PipelineConfig) -> tuple[Program, DebloatReport]:
    diags = validate(p, require_main=True)
    if diags:
        raise PipelineError("validate", ValueError("; ".join(str(d) for d in diags)))
    necked, neck = _phase("mine", mine_neck, p, cfg.miner())
    out, st, plan, passes = specialize(necked, cfg)
    post = validate(out, require_main=True)
    if post:
        raise PipelineError("simplify", ValueError("result does not validate: " + str(post[0])))
    return out, DebloatReport(neck, st, plan, passes, stats(p), stats(out))


def report_json(report: DebloatReport, extra: Optional[dict] = None) -> str:
    d = report.as_dict()
    if extra:
        d.update(extra)
    return json.dumps(d, indent=2, sort_keys=True)

