from .state import (
    TABLE,
    Action,
    BwError,
    BwGoal,
    BwProblem,
    BwState,
    apply_action,
    clear_of,
    clear_values,
    format_instance,
    load_instance,
    parse_instance,
)
from .solver import Solution, bw_gradients, solve

__all__ = [
    "TABLE",
    "Action",
    "BwError",
    "BwGoal",
    "BwProblem",
    "BwState",
    "Solution",
    "apply_action",
    "bw_gradients",
    "clear_of",
    "clear_values",
    "format_instance",
    "load_instance",
    "parse_instance",
    "solve",
]
