import functools

import pytest

from debloatkit import corpus
from debloatkit.ir import parse_program
from debloatkit.pipeline import PipelineConfig, debloat_pipeline


@pytest.fixture
def wc():
    return corpus.load("wc")


def config_for(prog, cfg):
    return PipelineConfig(category=prog.category, supplied_args=list(cfg.args),
                          config_input=cfg.config_input)


@functools.lru_cache(maxsize=None)
def debloated(name, slug):
    prog = corpus.program(name)
    cfg = next(c for c in prog.configs if c.slug == slug)
    return debloat_pipeline(prog.load(), config_for(prog, cfg))


def prog(text):
    return parse_program(text)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
