"""Closed-form approximate PFDavg for M-out-of-N channels.

First-order equations with imperfect proof tests and beta-factor common
cause failures. They are conservative inside their validity domain
(``lambda_DUT*T1 < 0.1`` and ``lambda_DUU*T0 < 0.1``); outside it the value is
still returned, with a warning attached.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

from .model import Method, PfdResult, SafetyParams, check_validity, derive_rates


def binom(n: int, k: int) -> int:
    if k < 0 or k > n:
        raise ValueError(f"binom requires 0 <= k <= n, got n={n}, k={k}")
    return math.comb(n, k)


def f_factor(x: int, b: float) -> float:
    """Independent-fraction weight: no beta reduction for a single failed channel."""
    if x < 1:
        raise ValueError(f"f_factor requires x >= 1, got {x}")
    return 1.0 if x == 1 else 1.0 - b


@dataclass(frozen=True)
class AnalyticTermBreakdown:
    dd_independent: float
    dut_independent: float
    duu_independent: float
    dd_dut: float
    dd_duu: float
    dut_duu: float
    dd_dut_duu: float
    ccf_dd: float
    ccf_dut: float
    ccf_duu: float

    @property
    def total(self) -> float:
        return math.fsum(astuple(self))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def analytic_breakdown(params: SafetyParams) -> AnalyticTermBreakdown:
    r = derive_rates(params)
    n, m = params.n, params.m
    t1, t0 = params.t1, params.t0
    b_dd, b_dut, b_duu = params.beta_dd, params.beta_dut, params.beta_duu
    q_dd = r.lambda_dd / params.mu_dd if params.mu_dd > 0 else math.inf
    mttr_dut = 1.0 / params.mu_dut if params.mu_dut > 0 else math.inf
    if r.lambda_dd == 0:
        q_dd = 0.0
    r_dut = n - m + 1  # failures needed to lose the function

    def dut_window(power_t1: int, divisor: int) -> float:
        # T1^p * (T1/d + MTTR); zero-rate terms stay zero even with no repair
        return t1**power_t1 * (t1 / divisor + mttr_dut)

    def prod(factor: float, k: int, window: float) -> float:
        # factor**k * window, guarding 0 * inf when a rate is zero
        if factor == 0.0:
            return 0.0
        return factor**k * window

    c = binom(n, r_dut)
    dd_ind = c * prod((1 - b_dd) * q_dd, r_dut, 1.0)
    dut_ind = c * prod((1 - b_dut) * r.lambda_dut, r_dut, dut_window(n - m, n - m + 2))
    duu_ind = c * prod((1 - b_duu) * r.lambda_duu, r_dut, t0 ** (n - m) * (t0 / (n - m + 2)))

    dd_dut = dd_duu = dut_duu = 0.0
    for i in range(1, n - m + 1):
        k_dd = n - m + 1 - i
        dd_part = binom(n - i, k_dd) * prod(f_factor(k_dd, b_dd) * q_dd, k_dd, 1.0)
        dd_dut += dd_part * binom(n, i) * prod(
            f_factor(i, b_dut) * r.lambda_dut, i, dut_window(i - 1, i + 1)
        )
        dd_duu += dd_part * binom(n, i) * prod(
            f_factor(i, b_duu) * r.lambda_duu, i, t0 ** (i - 1) * (t0 / (i + 1))
        )
        dut_part = binom(n - i, k_dd) * prod(
            (1 - b_dut) * r.lambda_dut, k_dd, dut_window(n - m - i, n - m + 2 - i)
        )
        dut_duu += dut_part * binom(n, i) * prod(
            (1 - b_duu) * r.lambda_duu, i, t0 ** (i - 1) * (t0 / (i + 1))
        )

    triple = 0.0
    for i in range(1, n - m):
        duu_part = binom(n, i) * prod((1 - b_duu) * r.lambda_duu, i, t0 ** (i - 1) * (t0 / (i + 1)))
        for j in range(1, n - m - i + 1):
            k_dd = n - m + 1 - i - j
            triple += (
                binom(n - i - j, k_dd)
                * prod(f_factor(k_dd, b_dd) * q_dd, k_dd, 1.0)
                * binom(n - i, j)
                * prod((1 - b_dut) * r.lambda_dut, j, dut_window(j - 1, j + 1))
                * duu_part
            )

    return AnalyticTermBreakdown(
        dd_independent=dd_ind,
        dut_independent=dut_ind,
        duu_independent=duu_ind,
        dd_dut=dd_dut,
        dd_duu=dd_duu,
        dut_duu=dut_duu,
        dd_dut_duu=triple,
        ccf_dd=b_dd * q_dd if b_dd else 0.0,
        ccf_dut=prod(b_dut * r.lambda_dut, 1, t1 / 2 + mttr_dut),
        ccf_duu=b_duu * r.lambda_duu * (t0 / 2),
    )


def pfd_avg_analytic(params: SafetyParams) -> PfdResult:
    terms = analytic_breakdown(params)
    total = terms.total
    diagnostics = [f"validity: {w}" for w in check_validity(params)]
    if total > 1.0:
        diagnostics.append(f"approximation exceeds 1 ({total:.6e}); clipped")
        total = 1.0
    diagnostics.extend(f"term {k} = {v:.6e}" for k, v in terms.as_dict().items())
    return PfdResult(value=total, method=Method.ANALYTIC, diagnostics=tuple(diagnostics))
