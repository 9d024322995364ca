import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from pfdavg.markov import (
    ChannelMode,
    build_generator,
    enumerate_states,
    pfd_avg_markov,
    state_label,
    transient_solve,
)
from pfdavg.model import load_case

from conftest import make_params


@pytest.mark.parametrize("n,count", [(1, 5), (2, 15), (3, 35), (4, 70)])
def test_state_count(n, count):
    states = enumerate_states(n)
    assert len(states) == count == math.comb(n + 4, 4)
    assert states[0] == (n, 0, 0, 0, 0)
    assert all(sum(s) == n for s in states)


def test_state_labels():
    assert state_label((0, 0, 1, 0, 1)) == "DUT_RepDUT"
    assert str(ChannelMode.REP_DUT) == "RepDUT"


def test_generator_rows(case_params):
    model = build_generator(case_params)
    g = model.generator
    np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-15)
    off = g - np.diag(np.diag(g))
    assert np.all(off >= 0)


def test_generator_case_iii_rates():
    p = load_case("iii")
    model = build_generator(p)
    idx = {state_label(s): i for i, s in enumerate(model.states)}
    g = model.generator
    assert g[idx["OK_OK"], idx["DD_DD"]] == pytest.approx(0.02 * 1.35e-6)
    assert g[idx["OK_OK"], idx["OK_DD"]] == pytest.approx(2 * 0.98 * 1.35e-6)
    assert g[idx["OK_DUU"], idx["DUU_DUU"]] == pytest.approx(1.35e-7)  # ind + ccf from one OK
    # absorbing: nothing undoes an unrevealed failure
    assert np.all(g[idx["DUU_DUU"]] == 0)
    assert model.eff[idx["OK_DUU"]] == 0 and model.eff[idx["DD_DUU"]] == 1


def test_linking_moves_dut_to_repair():
    model = build_generator(load_case("v"))
    for i, s in enumerate(model.states):
        t = model.states[model.linking[i]]
        assert t[ChannelMode.DUT] == 0
        assert t[ChannelMode.REP_DUT] == s[ChannelMode.REP_DUT] + s[ChannelMode.DUT]


def test_dump_is_deterministic():
    a = build_generator(load_case("iv")).dump()
    assert a == build_generator(load_case("iv")).dump()
    assert a.startswith("states 15\n0 OK_OK eff=0")


def test_two_state_closed_form():
    # one channel, only detected failures: p_fail(t) = l/(l+m)(1 - e^{-(l+m)t})
    lam, mu, t = 1e-3, 0.05, 200.0
    p = make_params(m=1, n=1, lambda_d=lam, dc=1.0, mu_dd=mu, t1=t, t0=t)
    model = build_generator(p)
    p0 = np.zeros(5)
    p0[0] = 1.0
    s = lam + mu
    p_end, integral = transient_solve(model, p0, t, tol=1e-14)
    assert p_end[1] == pytest.approx(lam / s * -math.expm1(-s * t), rel=1e-9)
    exact = lam / s * (t + math.expm1(-s * t) / s)
    assert integral == pytest.approx(exact, rel=1e-9)


def test_zero_generator():
    model = build_generator(make_params(lambda_d=0.0, mu_dd=0.0, mu_dut=0.0))
    assert not model.generator.any()
    p0 = np.zeros(15)
    p0[0] = 1.0
    p_end, integral = transient_solve(model, p0, 100.0)
    np.testing.assert_array_equal(p_end, p0)
    assert integral == 0.0
    assert pfd_avg_markov(make_params(lambda_d=0.0)).value == 0.0


def test_bad_initial_vector():
    model = build_generator(load_case("iii"))
    with pytest.raises(ValueError):
        transient_solve(model, np.full(15, 0.5), 10.0)


def _expm_oracle(params):
    """Phase-by-phase matrix exponential of an augmented generator."""
    model = build_generator(params)
    n = len(model.states)
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = model.generator
    aug[:n, n] = model.eff
    E = expm(aug * params.t1)
    p = np.zeros(n + 1)
    p[model.initial_state] = 1.0
    total = 0.0
    for _ in range(params.phases):
        p = p @ E
        total += p[n]
        p = np.append(model.linked(p[:n]), 0.0)
    return total / params.t0


def test_against_matrix_exponential(case_params):
    assert pfd_avg_markov(case_params).value == pytest.approx(_expm_oracle(case_params), rel=1e-8)


def test_probability_conserved_over_phases(case_params):
    model = build_generator(case_params)
    p = np.zeros(len(model.states))
    p[model.initial_state] = 1.0
    for _ in range(case_params.phases):
        p, _ = transient_solve(model, p, case_params.t1)
        assert abs(p.sum() - 1.0) < 1e-10
        assert np.all(p > -1e-14)
        p = model.linked(p)


def test_unavailability_continuous_across_linking(case_params):
    # DUT -> RepDUT keeps a channel unavailable, so eff.p is unchanged at a test
    model = build_generator(case_params)
    p = np.zeros(len(model.states))
    p[model.initial_state] = 1.0
    p, _ = transient_solve(model, p, case_params.t1)
    assert model.eff @ model.linked(p) == pytest.approx(model.eff @ p, rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(b1=st.floats(0, 1), b2=st.floats(0, 1), b3=st.floats(0, 1))
def test_single_channel_independent_of_beta(b1, b2, b3):
    ref = pfd_avg_markov(load_case("i")).value
    p = make_params(m=1, n=1, beta_dd=b1, beta_dut=b2, beta_duu=b3)
    assert pfd_avg_markov(p).value == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("case,expected", [
    ("i", 7.41e-3), ("ii", 1.24e-1), ("iii", 4.29e-4), ("iv", 2.83e-2),
])
def test_reference_values(case, expected):
    assert pfd_avg_markov(load_case(case)).value == pytest.approx(expected, rel=0.01)


@pytest.mark.parametrize("case,petri", [("v", 5.47e-4), ("vi", 5.43e-2)])
def test_against_reference_simulation(case, petri):
    assert pfd_avg_markov(load_case(case)).value == pytest.approx(petri, rel=0.02)
