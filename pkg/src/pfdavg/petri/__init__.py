"""Stochastic Petri nets with predicates and their Monte Carlo estimator.

The event loop runs in a compiled extension when it is built, otherwise in
pure Python; ``PFDAVG_BACKEND=python`` forces the fallback.
"""

from .montecarlo import (
    McEstimate,
    SimulationError,
    available_backends,
    default_backend,
    format_trace,
    monte_carlo,
    pfd_avg_petri,
    simulate_history,
)
from .net import (
    Assignment,
    Comparison,
    Dirac,
    Exp,
    Ipa,
    PetriNet,
    Place,
    Transition,
    build_case_net,
    parse_assignment,
    parse_guard,
)
from .rng import history_seed
