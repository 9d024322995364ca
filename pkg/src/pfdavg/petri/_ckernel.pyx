# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernel; mirrors ``_pykernel.simulate`` operation for operation."""

import numpy as np

from libc.math cimport log, INFINITY, NAN
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double TWO_POW_M53 = 1.0 / 9007199254740992.0
cdef int64_t MAX_ZERO_TIME = 1000000

cdef enum:
    KIND_EXP = 0
    KIND_DIRAC = 1
    KIND_IPA = 2


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline bint cmp(int64_t a, int64_t op, int64_t b) nogil:
    if op == 0:
        return a == b
    elif op == 1:
        return a != b
    elif op == 2:
        return a < b
    elif op == 3:
        return a <= b
    elif op == 4:
        return a > b
    return a >= b


cdef struct Net:
    int64_t nt
    int64_t np
    int64_t nv
    int64_t* kind
    double* param
    int64_t* in_ptr
    int64_t* in_place
    int64_t* in_weight
    int64_t* out_ptr
    int64_t* out_place
    int64_t* out_weight
    int64_t* g_ptr
    int64_t* g_var
    int64_t* g_op
    int64_t* g_val
    int64_t* a_ptr
    int64_t* a_var
    int64_t* a_op
    int64_t* a_val
    int64_t ns
    int64_t* s_var
    int64_t* s_op
    int64_t* s_val


cdef inline bint enabled(Net* n, int64_t* marking, int64_t* var, int64_t j) nogil:
    cdef int64_t i
    for i in range(n.in_ptr[j], n.in_ptr[j + 1]):
        if marking[n.in_place[i]] < n.in_weight[i]:
            return False
    for i in range(n.g_ptr[j], n.g_ptr[j + 1]):
        if not cmp(var[n.g_var[i]], n.g_op[i], n.g_val[i]):
            return False
    return True


cdef inline void fire(Net* n, int64_t* marking, int64_t* var, int64_t j) nogil:
    cdef int64_t i, op
    for i in range(n.in_ptr[j], n.in_ptr[j + 1]):
        marking[n.in_place[i]] -= n.in_weight[i]
    for i in range(n.out_ptr[j], n.out_ptr[j + 1]):
        marking[n.out_place[i]] += n.out_weight[i]
    for i in range(n.a_ptr[j], n.a_ptr[j + 1]):
        op = n.a_op[i]
        if op == 0:
            var[n.a_var[i]] = n.a_val[i]
        elif op == 1:
            var[n.a_var[i]] += n.a_val[i]
        else:
            var[n.a_var[i]] = n.a_val[i] - var[n.a_var[i]]


cdef inline int64_t stabilize(Net* n, int64_t* marking, int64_t* var, int64_t* immediate,
                              int64_t n_imm, int64_t fired) nogil:
    """Fire zero-delay transitions (lowest index first) until none is enabled; -1 on livelock."""
    cdef int64_t k, j
    cdef bint any_fired = True
    while any_fired:
        any_fired = False
        for k in range(n_imm):
            j = immediate[k]
            if enabled(n, marking, var, j):
                fire(n, marking, var, j)
                fired += 1
                if fired > MAX_ZERO_TIME:
                    return -1
                any_fired = True
                break
    return fired


cdef double simulate_one(Net* n, double horizon, uint64_t seed,
                         int64_t* marking0, int64_t* vars0,
                         int64_t* marking, int64_t* var, double* clock, int64_t* tick_k,
                         int64_t* immediate, int64_t n_imm,
                         int64_t* timed, int64_t n_timed,
                         int64_t* ipa, int64_t n_ipa) nogil:
    cdef uint64_t state = seed
    cdef int64_t i, j, jc, fired, k
    cdef double t = 0.0, acc = 0.0, tc, tt, te, tk, u, rate
    cdef bint failed

    for i in range(n.np):
        marking[i] = marking0[i]
    for i in range(n.nv):
        var[i] = vars0[i]
    for i in range(n.nt):
        clock[i] = INFINITY
        tick_k[i] = 1

    if stabilize(n, marking, var, immediate, n_imm, 0) < 0:
        return NAN
    # initial clocks
    for k in range(n_timed):
        j = timed[k]
        if enabled(n, marking, var, j):
            if clock[j] == INFINITY:
                if n.kind[j] == KIND_EXP:
                    state = state + GOLDEN
                    u = (<double>(mix64(state) >> 11) + 0.5) * TWO_POW_M53
                    rate = n.param[j]
                    clock[j] = t + (-log(u) / rate) if rate > 0.0 else INFINITY
                else:
                    clock[j] = t + n.param[j]
        else:
            clock[j] = INFINITY

    while True:
        failed = True
        for i in range(n.ns):
            if not cmp(var[n.s_var[i]], n.s_op[i], n.s_val[i]):
                failed = False
                break
        tc = INFINITY
        jc = -1
        for k in range(n_timed):
            j = timed[k]
            if clock[j] < tc:
                tc = clock[j]
                jc = j
        tt = INFINITY
        for k in range(n_ipa):
            j = ipa[k]
            tk = <double>tick_k[j] * n.param[j]
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
            clock[jc] = INFINITY
            fire(n, marking, var, jc)
            fired = stabilize(n, marking, var, immediate, n_imm, 1)
            if fired < 0:
                return NAN
        else:
            fired = stabilize(n, marking, var, immediate, n_imm, 0)
            if fired < 0:
                return NAN
            for k in range(n_ipa):
                j = ipa[k]
                if <double>tick_k[j] * n.param[j] == t:
                    tick_k[j] += 1
                    if enabled(n, marking, var, j):
                        fire(n, marking, var, j)
                        fired = stabilize(n, marking, var, immediate, n_imm, fired + 1)
                        if fired < 0:
                            return NAN
        for k in range(n_timed):
            j = timed[k]
            if enabled(n, marking, var, j):
                if clock[j] == INFINITY:
                    if n.kind[j] == KIND_EXP:
                        state = state + GOLDEN
                        u = (<double>(mix64(state) >> 11) + 0.5) * TWO_POW_M53
                        rate = n.param[j]
                        clock[j] = t + (-log(u) / rate) if rate > 0.0 else INFINITY
                    else:
                        clock[j] = t + n.param[j]
            else:
                clock[j] = INFINITY
    return acc / horizon


def simulate_many(net, double horizon, seeds):
    """Per-history fractions for each seed; NaN marks an aborted history."""
    cdef int64_t[::1] kind = np.ascontiguousarray(net.kind, dtype=np.int64)
    cdef double[::1] param = np.ascontiguousarray(net.param, dtype=np.float64)
    cdef int64_t[::1] in_ptr = np.ascontiguousarray(net.in_ptr, dtype=np.int64)
    cdef int64_t[::1] in_place = np.ascontiguousarray(np.append(net.in_place, 0), dtype=np.int64)
    cdef int64_t[::1] in_weight = np.ascontiguousarray(np.append(net.in_weight, 0), dtype=np.int64)
    cdef int64_t[::1] out_ptr = np.ascontiguousarray(net.out_ptr, dtype=np.int64)
    cdef int64_t[::1] out_place = np.ascontiguousarray(np.append(net.out_place, 0), dtype=np.int64)
    cdef int64_t[::1] out_weight = np.ascontiguousarray(np.append(net.out_weight, 0), dtype=np.int64)
    cdef int64_t[::1] g_ptr = np.ascontiguousarray(net.g_ptr, dtype=np.int64)
    cdef int64_t[::1] g_var = np.ascontiguousarray(np.append(net.g_var, 0), dtype=np.int64)
    cdef int64_t[::1] g_op = np.ascontiguousarray(np.append(net.g_op, 0), dtype=np.int64)
    cdef int64_t[::1] g_val = np.ascontiguousarray(np.append(net.g_val, 0), dtype=np.int64)
    cdef int64_t[::1] a_ptr = np.ascontiguousarray(net.a_ptr, dtype=np.int64)
    cdef int64_t[::1] a_var = np.ascontiguousarray(np.append(net.a_var, 0), dtype=np.int64)
    cdef int64_t[::1] a_op = np.ascontiguousarray(np.append(net.a_op, 0), dtype=np.int64)
    cdef int64_t[::1] a_val = np.ascontiguousarray(np.append(net.a_val, 0), dtype=np.int64)
    cdef int64_t[::1] s_var = np.ascontiguousarray(np.append(net.s_var, 0), dtype=np.int64)
    cdef int64_t[::1] s_op = np.ascontiguousarray(np.append(net.s_op, 0), dtype=np.int64)
    cdef int64_t[::1] s_val = np.ascontiguousarray(np.append(net.s_val, 0), dtype=np.int64)
    cdef int64_t[::1] marking0 = np.ascontiguousarray(np.append(net.marking0, 0), dtype=np.int64)
    cdef int64_t[::1] vars0 = np.ascontiguousarray(np.append(net.vars0, 0), dtype=np.int64)
    cdef uint64_t[::1] seed_view = np.ascontiguousarray(seeds, dtype=np.uint64)

    kind_np = np.asarray(net.kind)
    param_np = np.asarray(net.param)
    cdef int64_t[::1] immediate = np.append(
        np.flatnonzero((kind_np == KIND_DIRAC) & (param_np == 0.0)), 0).astype(np.int64)
    cdef int64_t[::1] timed = np.append(
        np.flatnonzero((kind_np == KIND_EXP) | ((kind_np == KIND_DIRAC) & (param_np > 0.0))),
        0).astype(np.int64)
    cdef int64_t[::1] ipa = np.append(np.flatnonzero(kind_np == KIND_IPA), 0).astype(np.int64)
    cdef int64_t n_imm = immediate.shape[0] - 1
    cdef int64_t n_timed = timed.shape[0] - 1
    cdef int64_t n_ipa = ipa.shape[0] - 1

    cdef Net n
    n.nt = kind.shape[0]
    n.np = len(net.marking0)
    n.nv = len(net.vars0)
    n.kind = &kind[0]
    n.param = &param[0]
    n.in_ptr = &in_ptr[0]
    n.in_place = &in_place[0]
    n.in_weight = &in_weight[0]
    n.out_ptr = &out_ptr[0]
    n.out_place = &out_place[0]
    n.out_weight = &out_weight[0]
    n.g_ptr = &g_ptr[0]
    n.g_var = &g_var[0]
    n.g_op = &g_op[0]
    n.g_val = &g_val[0]
    n.a_ptr = &a_ptr[0]
    n.a_var = &a_var[0]
    n.a_op = &a_op[0]
    n.a_val = &a_val[0]
    n.ns = len(net.s_var)
    n.s_var = &s_var[0]
    n.s_op = &s_op[0]
    n.s_val = &s_val[0]

    cdef int64_t count = seed_view.shape[0]
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] out_view = out
    cdef int64_t* marking = <int64_t*>malloc((n.np + 1) * sizeof(int64_t))
    cdef int64_t* var = <int64_t*>malloc((n.nv + 1) * sizeof(int64_t))
    cdef double* clock = <double*>malloc((n.nt + 1) * sizeof(double))
    cdef int64_t* tick_k = <int64_t*>malloc((n.nt + 1) * sizeof(int64_t))
    cdef int64_t h
    if marking == NULL or var == NULL or clock == NULL or tick_k == NULL:
        free(marking); free(var); free(clock); free(tick_k)
        raise MemoryError()
    try:
        with nogil:
            for h in range(count):
                out_view[h] = simulate_one(&n, horizon, seed_view[h], &marking0[0], &vars0[0],
                                           marking, var, clock, tick_k,
                                           &immediate[0], n_imm, &timed[0], n_timed,
                                           &ipa[0], n_ipa)
    finally:
        free(marking)
        free(var)
        free(clock)
        free(tick_k)
    return out
