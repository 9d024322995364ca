"""Pure-Python simulation kernel.

Reference semantics for the compiled kernel in ``_ckernel.pyx``; both must
produce bit-identical results for the same seeds. This one additionally
supports observers (event traces) and invariant checking.
"""

import math

import numpy as np

from .net import KIND_DIRAC, KIND_EXP, KIND_IPA
from .rng import GOLDEN, MASK64, TWO_POW_M53, mix64

INF = math.inf
MAX_ZERO_TIME_FIRINGS = 10**6


class LivelockError(RuntimeError):
    pass


def _cmp(a, op, b):
    if op == 0:
        return a == b
    if op == 1:
        return a != b
    if op == 2:
        return a < b
    if op == 3:
        return a <= b
    if op == 4:
        return a > b
    return a >= b


class _Prepared:
    """Per-transition tuples pulled out of a CompiledNet once."""

    def __init__(self, net):
        self.net = net
        nt = len(net.kind)
        self.nt = nt
        self.kind = [int(k) for k in net.kind]
        self.param = [float(p) for p in net.param]

        def rows(ptr, *cols):
            return [
                tuple(tuple(int(c[i]) for c in cols) for i in range(ptr[j], ptr[j + 1]))
                for j in range(nt)
            ]

        self.inputs = rows(net.in_ptr, net.in_place, net.in_weight)
        self.outputs = rows(net.out_ptr, net.out_place, net.out_weight)
        self.guards = rows(net.g_ptr, net.g_var, net.g_op, net.g_val)
        self.assigns = rows(net.a_ptr, net.a_var, net.a_op, net.a_val)
        self.stat = tuple(zip(net.s_var.tolist(), net.s_op.tolist(), net.s_val.tolist()))
        self.immediate = [j for j in range(nt) if self.kind[j] == KIND_DIRAC and self.param[j] == 0.0]
        self.timed = [j for j in range(nt)
                      if self.kind[j] == KIND_EXP or (self.kind[j] == KIND_DIRAC and self.param[j] > 0.0)]
        self.ipa = [j for j in range(nt) if self.kind[j] == KIND_IPA]


_CACHE = {}


def prepare(net):
    key = id(net)
    hit = _CACHE.get(key)
    if hit is None or hit.net is not net:
        hit = _Prepared(net)
        _CACHE.clear()
        _CACHE[key] = hit
    return hit


def simulate(net, horizon, seed, observer=None, check=False):
    """One history; returns the fraction of ``[0, horizon]`` with the stat predicate true.

    ``observer(time, transition_index, marking, variables)`` is called after
    every firing and once at t=0 with ``transition_index=-1``.
    """
    pr = prepare(net)
    marking = net.marking0.tolist()
    var = net.vars0.tolist()
    kind, param = pr.kind, pr.param
    inputs, outputs, guards, assigns = pr.inputs, pr.outputs, pr.guards, pr.assigns
    state = seed & MASK64

    def enabled(j):
        for p, w in inputs[j]:
            if marking[p] < w:
                return False
        for v, op, val in guards[j]:
            if not _cmp(var[v], op, val):
                return False
        return True

    def fire(j, now):
        for p, w in inputs[j]:
            marking[p] -= w
        for p, w in outputs[j]:
            marking[p] += w
        for v, op, val in assigns[j]:
            if op == 0:
                var[v] = val
            elif op == 1:
                var[v] += val
            else:
                var[v] = val - var[v]
        if check:
            for g in net.groups:
                if sum(marking[p] for p in g) != 1:
                    raise AssertionError(f"token conservation broken at t={now} after {j}")
        if observer is not None:
            observer(now, j, marking, var)

    def stabilize(now, fired):
        while True:
            for j in pr.immediate:
                if enabled(j):
                    fire(j, now)
                    fired += 1
                    if fired > MAX_ZERO_TIME_FIRINGS:
                        raise LivelockError(f"more than {MAX_ZERO_TIME_FIRINGS} zero-time firings at t={now}")
                    break
            else:
                return fired

    clock = [INF] * pr.nt
    tick_k = [1] * pr.nt

    def update_clocks(now):
        nonlocal state
        for j in pr.timed:
            if enabled(j):
                if clock[j] == INF:
                    if kind[j] == KIND_EXP:
                        state = (state + GOLDEN) & MASK64
                        u = ((mix64(state) >> 11) + 0.5) * TWO_POW_M53
                        rate = param[j]
                        clock[j] = now + (-math.log(u) / rate) if rate > 0.0 else INF
                    else:
                        clock[j] = now + param[j]
            else:
                clock[j] = INF

    if observer is not None:
        observer(0.0, -1, marking, var)
    t = 0.0
    stabilize(t, 0)
    update_clocks(t)
    acc = 0.0
    while True:
        failed = True
        for v, op, val in pr.stat:
            if not _cmp(var[v], op, val):
                failed = False
                break
        tc, jc = INF, -1
        for j in pr.timed:
            if clock[j] < tc:
                tc, jc = clock[j], j
        tt = INF
        for j in pr.ipa:
            tk = tick_k[j] * param[j]
            if tk < tt:
                tt = tk
        te = tc if tc <= tt else tt
        if te >= horizon:
            if failed:
                acc += horizon - t
            break
        if failed:
            acc += te - t
        t = te
        if tc <= tt:
            clock[jc] = INF
            fire(jc, t)
            fired = stabilize(t, 1)
        else:
            fired = stabilize(t, 0)
            for j in pr.ipa:
                if tick_k[j] * param[j] == t:
                    tick_k[j] += 1
                    if enabled(j):
                        fire(j, t)
                        fired = stabilize(t, fired + 1)
        update_clocks(t)
    return acc / horizon


def simulate_many(net, horizon, seeds):
    """Per-history fractions for each seed; NaN marks an aborted history."""
    out = np.empty(len(seeds), dtype=np.float64)
    for i, seed in enumerate(seeds):
        try:
            out[i] = simulate(net, horizon, int(seed))
        except LivelockError:
            out[i] = np.nan
    return out
