"""Input parameters, derived failure rates and the built-in case library."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import Optional


class Method(str, enum.Enum):
    ANALYTIC = "analytic"
    FAULTTREE = "faulttree"
    MARKOV = "markov"
    PETRI = "petri"


class CaseId(str, enum.Enum):
    I = "i"
    II = "ii"
    III = "iii"
    IV = "iv"
    V = "v"
    VI = "vi"


# Relative tolerance when checking that t0 is a whole number of proof-test periods.
_PHASE_RTOL = 1e-9


@dataclass(frozen=True)
class SafetyParams:
    """Full input set for one M-out-of-N subsystem.

    Rates are per hour, periods in hours. ``m`` is the number of channels
    that must be operative for the safety function to succeed.
    """

    m: int
    n: int
    lambda_d: float
    dc: float
    ptc: float
    beta_dd: float
    beta_dut: float
    beta_duu: float
    mu_dd: float
    mu_dut: float
    t1: float
    t0: float

    def __post_init__(self):
        if not (isinstance(self.m, int) and isinstance(self.n, int)):
            raise ValueError("m and n must be integers")
        if not 1 <= self.m <= self.n:
            raise ValueError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        for name in ("lambda_d", "mu_dd", "mu_dut"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("dc", "ptc", "beta_dd", "beta_dut", "beta_duu"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not (self.t1 > 0 and self.t0 > 0):
            raise ValueError("t1 and t0 must be > 0")
        ratio = self.t0 / self.t1
        if abs(ratio - round(ratio)) > _PHASE_RTOL * ratio or round(ratio) < 1:
            raise ValueError(
                f"t0 ({self.t0}) must be an integer multiple of t1 ({self.t1})"
            )

    @property
    def phases(self) -> int:
        """Number of proof-test periods in the assessment period."""
        return int(round(self.t0 / self.t1))

    @property
    def label(self) -> str:
        return f"{self.m}oo{self.n}"


@dataclass(frozen=True)
class DerivedRates:
    lambda_dd: float
    lambda_du: float
    lambda_dut: float
    lambda_duu: float
    dd_ind: float
    dd_ccf: float
    dut_ind: float
    dut_ccf: float
    duu_ind: float
    duu_ccf: float


@dataclass(frozen=True)
class PfdResult:
    value: float
    method: Method
    ci90_halfwidth: Optional[float] = None
    diagnostics: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"PFDavg {self.value!r} outside [0, 1]")
        if (self.ci90_halfwidth is not None) != (self.method is Method.PETRI):
            raise ValueError("ci90_halfwidth is required for petri results only")


def derive_rates(params: SafetyParams) -> DerivedRates:
    lam_dd = params.dc * params.lambda_d
    lam_du = (1.0 - params.dc) * params.lambda_d
    lam_dut = params.ptc * lam_du
    lam_duu = (1.0 - params.ptc) * lam_du
    return DerivedRates(
        lambda_dd=lam_dd,
        lambda_du=lam_du,
        lambda_dut=lam_dut,
        lambda_duu=lam_duu,
        dd_ind=(1.0 - params.beta_dd) * lam_dd,
        dd_ccf=params.beta_dd * lam_dd,
        dut_ind=(1.0 - params.beta_dut) * lam_dut,
        dut_ccf=params.beta_dut * lam_dut,
        duu_ind=(1.0 - params.beta_duu) * lam_duu,
        duu_ccf=params.beta_duu * lam_duu,
    )


# Eight years, shared by every built-in case.
T0_HOURS = 70128.0

_ODD = dict(lambda_d=2.70e-6, dc=0.50, ptc=0.90, beta_dd=0.02, beta_dut=0.05,
            beta_duu=0.05, mu_dd=0.0417, mu_dut=0.0417, t1=4383.0)
_EVEN = dict(lambda_d=1.35e-5, dc=0.25, ptc=0.70, beta_dd=0.05, beta_dut=0.10,
             beta_duu=0.10, mu_dd=0.0833, mu_dut=0.0833, t1=8766.0)

_CASES = {
    CaseId.I: (1, 1, _ODD),
    CaseId.II: (1, 1, _EVEN),
    CaseId.III: (1, 2, _ODD),
    CaseId.IV: (1, 2, _EVEN),
    CaseId.V: (2, 3, _ODD),
    CaseId.VI: (2, 3, _EVEN),
}


def load_case(case_id) -> SafetyParams:
    """Return the parameters of a built-in case (``"i"`` .. ``"vi"``)."""
    try:
        cid = CaseId(case_id)
    except ValueError:
        raise KeyError(f"unknown case id {case_id!r}") from None
    m, n, values = _CASES[cid]
    return SafetyParams(m=m, n=n, t0=T0_HOURS, **values)


@dataclass(frozen=True)
class ValidityWarning:
    condition: str
    product: float
    limit: float = 0.1

    def __str__(self):
        return f"{self.condition} = {self.product:.3f} >= {self.limit} (approximation validity)"


def check_validity(params: SafetyParams) -> list[ValidityWarning]:
    """Check the first-order validity conditions of the approximate equations."""
    rates = derive_rates(params)
    out = []
    dut_t1 = rates.lambda_dut * params.t1
    duu_t0 = rates.lambda_duu * params.t0
    if dut_t1 >= 0.1:
        out.append(ValidityWarning("lambda_DUT*T1", dut_t1))
    if duu_t0 >= 0.1:
        out.append(ValidityWarning("lambda_DUU*T0", duu_t0))
    return out


# Field names of the external JSON case schema, in canonical order.
PARAM_KEYS = tuple(
    "t1_hours" if f.name == "t1" else "t0_hours" if f.name == "t0" else f.name
    for f in fields(SafetyParams)
)


def params_to_dict(params: SafetyParams) -> dict:
    return {key: getattr(params, f.name) for key, f in zip(PARAM_KEYS, fields(SafetyParams))}


def params_from_dict(data: dict) -> SafetyParams:
    """Build parameters from the flat JSON schema; unknown or missing keys raise."""
    if not isinstance(data, dict):
        raise ValueError("case input must be a JSON object")
    unknown = sorted(set(data) - set(PARAM_KEYS))
    if unknown:
        raise ValueError(f"unknown keys: {', '.join(unknown)}")
    missing = [k for k in PARAM_KEYS if k not in data]
    if missing:
        raise ValueError(f"missing keys: {', '.join(missing)}")
    kwargs = {}
    for key, f in zip(PARAM_KEYS, fields(SafetyParams)):
        value = data[key]
        if f.name in ("m", "n"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{key} must be an integer")
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{key} must be a number")
            value = float(value)
        kwargs[f.name] = value
    return SafetyParams(**kwargs)
