"""Adaptive bottom-up Datalog engine with runtime join reordering."""
from carapace.adaptive.config import JitConfig
from carapace.engine import Result, solve
from carapace.frontend import Program, parse

__all__ = ["JitConfig", "Program", "Result", "parse", "solve"]
__version__ = "0.1.0"
