"""Specialize programs in a small load/store IR to a fixed set of arguments.

The pipeline finds the neck (where option handling ends), interprets the
supplied arguments up to it, turns the captured state into constants, and
simplifies away the code that can no longer run.
"""

from .pipeline import DebloatReport, PipelineConfig, PipelineError, debloat_pipeline

__all__ = ["DebloatReport", "PipelineConfig", "PipelineError", "debloat_pipeline"]
__version__ = "0.1.0"
