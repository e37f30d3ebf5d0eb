"""Bundled example programs and their supplied-argument configurations."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from ..ir.model import Program
from ..ir.parser import parse_program


@dataclass(frozen=True)
class CorpusConfig:
    program: str
    slug: str
    args: tuple
    config_input: str = ""

    @property
    def golden_name(self) -> str:
        return f"{self.program}.{self.slug}.expected.ir"


@dataclass(frozen=True)
class CorpusProgram:
    name: str
    file: str
    category: str
    configs: tuple

    def text(self) -> str:
        return read_text(self.file)

    def load(self) -> Program:
        return parse_program(self.text())


def read_text(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")


def exists(name: str) -> bool:
    return resources.files(__name__).joinpath(name).is_file()


def programs() -> list[CorpusProgram]:
    manifest = json.loads(read_text("manifest.json"))
    out = []
    for entry in manifest["programs"]:
        cfgs = tuple(CorpusConfig(entry["name"], c["slug"], tuple(c["args"]), c.get("configInput", ""))
                     for c in entry["configs"])
        out.append(CorpusProgram(entry["name"], entry["file"], entry["category"], cfgs))
    return out


def program(name: str) -> CorpusProgram:
    for p in programs():
        if p.name == name:
            return p
    raise KeyError(name)


def load(name: str) -> Program:
    return program(name).load()


def pairs() -> list[tuple[CorpusProgram, CorpusConfig]]:
    return [(p, c) for p in programs() for c in p.configs]
