"""Distill answer-set programming rules from a language model, checked by a solver."""

from .asp_core import Program, Rule, parse_program
from .dataset import Example, load_corpus
from .distiller import DistillParams, run_session
from .solver import SolverConfig, solve

__all__ = ["DistillParams", "Example", "Program", "Rule", "SolverConfig", "load_corpus", "parse_program", "run_session", "solve"]
__version__ = "0.1.0"
