"""Monte Carlo estimation of time-averaged unavailability on a Petri net."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..model import Method, PfdResult, SafetyParams
from . import _pykernel
from .net import CompiledNet, PetriNet, build_case_net
from .rng import history_seed, history_seeds

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

Z90 = 1.645
CHUNK = 4096
MAX_ABORTED_FRACTION = 1e-4
DEFAULT_HISTORIES = 1_000_000


def available_backends() -> list[str]:
    return ["compiled", "python"] if _ckernel is not None else ["python"]


def default_backend() -> str:
    forced = os.environ.get("PFDAVG_BACKEND")
    if forced:
        if forced not in available_backends():
            raise RuntimeError(f"PFDAVG_BACKEND={forced!r} is not available")
        return forced
    return available_backends()[0]


def _kernel(backend):
    backend = backend or default_backend()
    if backend == "compiled":
        if _ckernel is None:
            raise RuntimeError("compiled kernel not built")
        return _ckernel
    if backend == "python":
        return _pykernel
    raise ValueError(f"unknown backend {backend!r}")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class McEstimate:
    mean: float
    ci90_halfwidth: float
    histories: int
    seed: int
    aborted: int = 0

    @property
    def std_error(self) -> float:
        return self.ci90_halfwidth / Z90


def _as_compiled(net):
    return net.compile() if isinstance(net, PetriNet) else net


def simulate_history(net, horizon: float, seed: int, observer=None, check=False,
                     backend=None) -> float:
    """Fraction of ``[0, horizon]`` during which the stat predicate holds.

    ``observer`` or ``check`` force the Python kernel, which is the only one
    that can report events and verify token conservation.
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    compiled = _as_compiled(net)
    if observer is not None or check:
        return _pykernel.simulate(compiled, horizon, seed, observer=observer, check=check)
    value = _kernel(backend).simulate_many(compiled, horizon, np.array([seed], dtype=np.uint64))[0]
    if math.isnan(value):
        raise _pykernel.LivelockError("history aborted: zero-time livelock")
    return float(value)


def _run_chunk(args):
    compiled, horizon, master_seed, start, count, backend = args
    values = _kernel(backend).simulate_many(compiled, horizon, history_seeds(master_seed, start, count))
    ok = values[~np.isnan(values)]
    return float(ok.sum()), float((ok * ok).sum()), int(ok.size), int(values.size - ok.size)


def monte_carlo(net, horizon: float, histories: int, master_seed: int, workers: int = 1,
                backend=None) -> McEstimate:
    """Mean of per-history fractions with a 90% normal-approximation interval.

    Histories are processed in fixed-size chunks and chunk sums are combined
    in chunk order, so the result does not depend on ``workers``.
    """
    if histories < 2:
        raise ValueError("need at least 2 histories")
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    compiled = _as_compiled(net)
    backend = backend or default_backend()
    tasks = [
        (compiled, horizon, master_seed, start, min(CHUNK, histories - start), backend)
        for start in range(0, histories, CHUNK)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    else:
        parts = [_run_chunk(t) for t in tasks]

    total = sq = 0.0
    done = aborted = 0
    for s, q, n_ok, n_bad in parts:
        total += s
        sq += q
        done += n_ok
        aborted += n_bad
    if aborted > MAX_ABORTED_FRACTION * histories:
        raise SimulationError(f"{aborted} of {histories} histories aborted (livelock)")
    if done < 2:
        raise SimulationError("fewer than 2 completed histories")
    mean = total / done
    var = max((sq - total * total / done) / (done - 1), 0.0)
    return McEstimate(
        mean=mean,
        ci90_halfwidth=Z90 * math.sqrt(var / done),
        histories=done,
        seed=master_seed,
        aborted=aborted,
    )


def pfd_avg_petri(params: SafetyParams, histories: int = DEFAULT_HISTORIES, seed: int = 42,
                  workers: int = 1, backend=None) -> PfdResult:
    net = build_case_net(params)
    est = monte_carlo(net, params.t0, histories, seed, workers=workers, backend=backend)
    diagnostics = (
        f"histories: {est.histories}",
        f"seed: {seed}",
        f"aborted: {est.aborted}",
        f"places: {len(net.places)}",
    )
    return PfdResult(
        value=min(max(est.mean, 0.0), 1.0),
        method=Method.PETRI,
        ci90_halfwidth=est.ci90_halfwidth,
        diagnostics=diagnostics,
    )


def format_trace(net, horizon: float, seed: int) -> str:
    """Event log of one history: time, transition, marking delta."""
    compiled = _as_compiled(net)
    lines = []
    prev = {}

    def observer(t, j, marking, variables):
        nonlocal prev
        cur = dict(zip(compiled.place_ids, marking))
        if j < 0:
            lines.append(f"{t:.6f} init "
                         + " ".join(f"{p}={n}" for p, n in cur.items() if n))
        else:
            delta = " ".join(
                f"{p}{cur[p] - prev[p]:+d}" for p in compiled.place_ids if cur[p] != prev[p]
            )
            state = " ".join(f"{v}={x}" for v, x in zip(compiled.var_names, variables))
            lines.append(f"{t:.6f} {compiled.transition_ids[j]} {delta} | {state}")
        prev = cur

    frac = _pykernel.simulate(compiled, horizon, seed, observer=observer)
    lines.append(f"fraction {frac:.12e}")
    return "\n".join(lines) + "\n"


__all__ = [
    "McEstimate",
    "SimulationError",
    "available_backends",
    "default_backend",
    "format_trace",
    "history_seed",
    "monte_carlo",
    "pfd_avg_petri",
    "simulate_history",
]
