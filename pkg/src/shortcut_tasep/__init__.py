"""Open-boundary TASEP with one or two zero-length shortcuts."""
from .model import (
    LatticeState,
    ModelSpec,
    Move,
    MoveKind,
    SpecError,
    TransitionTable,
    Variant,
    apply,
    plain_tasep,
    transition_rates,
    validate,
)
from .engine import SimConfig, StationaryReport, gillespie_step, make_rng, run

__version__ = "0.1.0"
