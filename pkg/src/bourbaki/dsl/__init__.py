"""The ``.alg`` model language: parsing, formatting and running checks."""

from .lexer import ModelError, tokenize
from .parser import AXIOMS, BUILTINS, ModelDoc, format_model, parse_model
from .runner import CheckResult, Model, RunReport, build_model, emit_report, replay_witness, run_checks

__all__ = [
    "ModelError",
    "tokenize",
    "AXIOMS",
    "BUILTINS",
    "ModelDoc",
    "format_model",
    "parse_model",
    "CheckResult",
    "Model",
    "RunReport",
    "build_model",
    "emit_report",
    "replay_witness",
    "run_checks",
]
