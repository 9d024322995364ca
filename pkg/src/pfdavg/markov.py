"""Multi-phase Markov model of identical M-out-of-N channels.

States are multisets of channel modes (channel identity erased). One phase
lasts a proof-test period; at each phase boundary every undetected-but-testable
failure (DUT) moves to repair (RepDUT). The transient inside a phase is
solved by uniformization.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .model import Method, PfdResult, SafetyParams, derive_rates


class ChannelMode(enum.IntEnum):
    OK = 0
    DD = 1
    DUT = 2
    DUU = 3
    REP_DUT = 4

    def __str__(self):
        return "RepDUT" if self is ChannelMode.REP_DUT else self.name


# A state is the count of channels in each mode, indexed by ChannelMode.
State = tuple


def enumerate_states(n: int) -> list[State]:
    """All mode-count vectors for ``n`` channels; all-OK comes first."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for combo in combinations_with_replacement(range(len(ChannelMode)), n):
        counts = [0] * len(ChannelMode)
        for mode in combo:
            counts[mode] += 1
        out.append(tuple(counts))
    return out


def state_label(state: State) -> str:
    parts = []
    for mode in ChannelMode:
        parts.extend([str(mode)] * state[mode])
    return "_".join(parts)


@dataclass(frozen=True)
class MarkovModel:
    states: list
    generator: np.ndarray
    eff: np.ndarray
    linking: np.ndarray
    phase_duration: float
    initial_state: int

    def linked(self, p: np.ndarray) -> np.ndarray:
        out = np.zeros_like(p)
        np.add.at(out, self.linking, p)
        return out

    def dump(self) -> str:
        """Deterministic state list and sparse generator triplets."""
        lines = [f"states {len(self.states)}"]
        for idx, s in enumerate(self.states):
            lines.append(f"{idx} {state_label(s)} eff={int(self.eff[idx])} link={self.linking[idx]}")
        lines.append("generator")
        rows, cols = np.nonzero(self.generator)
        for i, j in zip(rows, cols):
            if i != j:
                lines.append(f"{i} {j} {self.generator[i, j]:.12e}")
        return "\n".join(lines) + "\n"


def _move(state: State, src: ChannelMode, dst: ChannelMode, count: int = 1) -> State:
    s = list(state)
    s[src] -= count
    s[dst] += count
    return tuple(s)


def build_generator(params: SafetyParams) -> MarkovModel:
    rates = derive_rates(params)
    states = enumerate_states(params.n)
    index = {s: i for i, s in enumerate(states)}
    size = len(states)
    gen = np.zeros((size, size))

    failure_modes = (
        (ChannelMode.DD, rates.dd_ind, rates.dd_ccf),
        (ChannelMode.DUT, rates.dut_ind, rates.dut_ccf),
        (ChannelMode.DUU, rates.duu_ind, rates.duu_ccf),
    )
    for i, s in enumerate(states):
        k = s[ChannelMode.OK]
        if k >= 1:
            for mode, ind, ccf in failure_modes:
                gen[i, index[_move(s, ChannelMode.OK, mode)]] += k * ind
                # common cause hits every channel that is still OK
                gen[i, index[_move(s, ChannelMode.OK, mode, k)]] += ccf
        if s[ChannelMode.DD]:
            gen[i, index[_move(s, ChannelMode.DD, ChannelMode.OK)]] += s[ChannelMode.DD] * params.mu_dd
        if s[ChannelMode.REP_DUT]:
            gen[i, index[_move(s, ChannelMode.REP_DUT, ChannelMode.OK)]] += (
                s[ChannelMode.REP_DUT] * params.mu_dut
            )
    np.fill_diagonal(gen, 0.0)
    np.fill_diagonal(gen, -gen.sum(axis=1))

    eff = np.array([1.0 if s[ChannelMode.OK] < params.m else 0.0 for s in states])
    linking = np.array(
        [index[_move(s, ChannelMode.DUT, ChannelMode.REP_DUT, s[ChannelMode.DUT])] for s in states]
    )
    return MarkovModel(
        states=states,
        generator=gen,
        eff=eff,
        linking=linking,
        phase_duration=params.t1,
        initial_state=index[(params.n, 0, 0, 0, 0)],
    )


# Poisson mean per uniformization sub-step; keeps exp(-mean) far from underflow.
_MAX_STEP_MEAN = 16.0


def _uniformized_step(p, P, rate, dt, tol):
    """Advance ``p`` by ``dt`` with uniformization matrix ``P`` at ``rate``.

    Returns the end vector and the integral of the vector over the step. The
    series is cut once a geometric bound on the unsummed Poisson mass is
    <= tol and the matching bound on the unsummed integral is <= tol * dt.
    """
    a = rate * dt
    w = math.exp(-a)  # Poisson(k; a)
    cdf = w
    term = p
    p_end = w * term
    # integral = (1/rate) * sum_k P(N > k) * p P^k
    integ = max(1.0 - cdf, 0.0) * term
    k = 0
    while True:
        if k + 2 > a:
            ratio = a / (k + 2)
            mass_tail = w * (a / (k + 1)) / (1.0 - ratio)
            # sum_{j>k} P(N > j) <= mass_tail / (1 - ratio); scaled by 1/rate
            int_tail = mass_tail / (1.0 - ratio) / rate
            if mass_tail <= tol and int_tail <= tol * dt:
                break
        k += 1
        if k > 10_000:
            raise RuntimeError("uniformization series failed to converge")
        term = term @ P
        w *= a / k
        cdf += w
        p_end = p_end + w * term
        integ = integ + max(1.0 - cdf, 0.0) * term
    return p_end, integ / rate


def transient_solve(model: MarkovModel, p0, duration: float, tol: float = 1e-10):
    """Solve ``p(duration) = p0 exp(G duration)`` and ``∫ eff·p(t) dt``.

    Returns ``(p_end, integral)``; the integral is in probability-hours.
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (len(model.states),) or np.any(p0 < -1e-12) or abs(p0.sum() - 1.0) > 1e-9:
        raise ValueError("p0 must be a probability vector over the model states")
    if not duration > 0:
        raise ValueError("duration must be > 0")
    p_end, vec_integral = _propagate(model.generator, p0, duration, tol)
    return p_end, float(model.eff @ vec_integral)


def _propagate(gen, p0, duration, tol):
    rate = float(np.max(-np.diag(gen))) if gen.size else 0.0
    if rate <= 0.0:
        return p0.copy(), p0 * duration
    rate *= 1.02
    P = np.eye(gen.shape[0]) + gen / rate
    steps = max(1, math.ceil(rate * duration / _MAX_STEP_MEAN))
    dt = duration / steps
    # margin so that mass lost over many phases stays far below tol
    step_tol = 1e-3 * tol / steps
    p = p0
    total = np.zeros_like(p0)
    for _ in range(steps):
        p_next, integ = _uniformized_step(p, P, rate, dt, step_tol)
        total += integ
        p = p_next
    return p, total


def pfd_avg_markov(params: SafetyParams, tol: float = 1e-10) -> PfdResult:
    model = build_generator(params)
    p = np.zeros(len(model.states))
    p[model.initial_state] = 1.0
    integral = 0.0
    phases = params.phases
    for _ in range(phases):
        p, phase_int = transient_solve(model, p, model.phase_duration, tol)
        integral += phase_int
        p = model.linked(p)
    value = min(max(integral / params.t0, 0.0), 1.0)
    diagnostics = (f"states: {len(model.states)}", f"phases: {phases}")
    return PfdResult(value=value, method=Method.MARKOV, diagnostics=diagnostics)
