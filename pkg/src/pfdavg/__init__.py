"""PFDavg of M-out-of-N safety instrumented subsystems by four independent methods."""

from .analytic import pfd_avg_analytic
from .faulttree import pfd_avg_fault_tree
from .markov import pfd_avg_markov
from .model import (
    CaseId,
    DerivedRates,
    Method,
    PfdResult,
    SafetyParams,
    check_validity,
    derive_rates,
    load_case,
)
from .petri import pfd_avg_petri
from .report import emit, run_case, sil_band

__version__ = "0.1.0"
