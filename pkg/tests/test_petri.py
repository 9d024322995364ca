import math
import subprocess
import sys

import numpy as np
import pytest
from scipy.stats import binomtest

from pfdavg.markov import pfd_avg_markov
from pfdavg.model import load_case
from pfdavg.petri import (
    Comparison,
    Dirac,
    Exp,
    Ipa,
    PetriNet,
    Place,
    SimulationError,
    Transition,
    available_backends,
    build_case_net,
    default_backend,
    format_trace,
    monte_carlo,
    parse_assignment,
    parse_guard,
    pfd_avg_petri,
    simulate_history,
)
from pfdavg.petri import _pykernel
from pfdavg.petri.montecarlo import _kernel
from pfdavg.petri.net import ASSIGN_ADD, ASSIGN_RSUB, ASSIGN_SET
from pfdavg.petri.rng import SplitMix64, history_seed, history_seeds

needs_compiled = pytest.mark.skipif("compiled" not in available_backends(),
                                    reason="compiled kernel not built")


# -- guard and assignment language --------------------------------------------

def test_parse_guard():
    g = parse_guard("?? nbOK > 0 && CCF_DD == true")
    assert g == (Comparison("nbOK", ">", 0), Comparison("CCF_DD", "==", 1))
    assert parse_guard("") == () == parse_guard("true")
    assert parse_guard("flag and !other") == (Comparison("flag", "!=", 0), Comparison("other", "==", 0))


@pytest.mark.parametrize("text", ["x >> 1", "x == y z", "x || y"])
def test_parse_guard_rejects(text):
    with pytest.raises(ValueError):
        parse_guard(text)


def test_parse_assignment():
    a = parse_assignment("!! nbOK = nbOK - 1; f = true; k += 2; z = 3 - z; b = !b")
    assert [(x.var, x.op, x.value) for x in a] == [
        ("nbOK", ASSIGN_ADD, -1), ("f", ASSIGN_SET, 1), ("k", ASSIGN_ADD, 2),
        ("z", ASSIGN_RSUB, 3), ("b", ASSIGN_RSUB, 1),
    ]
    with pytest.raises(ValueError):
        parse_assignment("x == 1")


def test_undeclared_variable_rejected():
    with pytest.raises(ValueError, match="undeclared"):
        PetriNet((Place("A", 1),), {"x": 0}, (), (Comparison("y", "==", 0),))


# -- case nets ---------------------------------------------------------------

@pytest.mark.parametrize("case,places,transitions", [("i", 11, 15), ("iii", 16, 24), ("v", 21, 33)])
def test_case_net_size(case, places, transitions):
    net = build_case_net(load_case(case))
    assert len(net.places) == places
    assert len(net.transitions) == transitions


def test_stat_predicate_2oo3():
    net = build_case_net(load_case("vi"))
    assert net.stat == (Comparison("nbOK", "<", 2),)
    assert net.variables["nbOK"] == 3


# -- small nets with known answers -------------------------------------------

def _toggle_net():
    flip = Transition("flip", Ipa(1.0), assignments=parse_assignment("x = 1 - x"))
    return PetriNet((Place("P", 1),), {"x": 0}, (flip,), parse_guard("x == 1"))


def _two_state_net(lam, mu):
    places = (Place("OK", 1), Place("F", 0))
    trans = (
        Transition("fail", Exp(lam), (("OK", 1),), (("F", 1),), (), parse_assignment("down = 1")),
        Transition("repair", Exp(mu), (("F", 1),), (("OK", 1),), (), parse_assignment("down = 0")),
    )
    return PetriNet(places, {"down": 0}, trans, parse_guard("down == 1"), (("OK", "F"),))


def _two_state_exact(lam, mu, horizon):
    s = lam + mu
    return lam / s * (1.0 + math.expm1(-s * horizon) / (s * horizon))


@pytest.mark.parametrize("backend", available_backends())
def test_nothing_enabled(backend):
    net = PetriNet((Place("A", 0),), {"x": 0},
                   (Transition("t", Exp(1.0), (("A", 1),), ()),), parse_guard("x == 1"))
    assert simulate_history(net, 10.0, 1, backend=backend) == 0.0


@pytest.mark.parametrize("backend", available_backends())
def test_calendar_toggle(backend):
    assert simulate_history(_toggle_net(), 10.0, 3, backend=backend) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("backend", available_backends())
def test_always_failed(backend):
    net = PetriNet((Place("A", 1),), {"x": 1}, (), parse_guard("x == 1"))
    est = monte_carlo(net, 5.0, 100, 9, backend=backend)
    assert est.mean == 1.0 and est.ci90_halfwidth == 0.0


def test_histories_minimum():
    with pytest.raises(ValueError):
        monte_carlo(_toggle_net(), 10.0, 1, 0)


def test_immediate_before_calendar():
    # a zero-delay transition enabled at t=0 fires before the first tick
    places = (Place("A", 1), Place("B", 0))
    trans = (
        Transition("tick", Ipa(1.0), (("A", 1),), (("A", 1),), (), parse_assignment("x = 5")),
        Transition("now", Dirac(0.0), (("A", 1),), (("B", 1),), (), parse_assignment("x = 1")),
    )
    net = PetriNet(places, {"x": 0}, trans, parse_guard("x == 1"))
    assert simulate_history(net, 4.0, 1, backend="python") == 1.0


def _livelock_net():
    places = (Place("A", 1), Place("B", 0))
    trans = (Transition("ab", Dirac(0.0), (("A", 1),), (("B", 1),)),
             Transition("ba", Dirac(0.0), (("B", 1),), (("A", 1),)))
    return PetriNet(places, {"x": 0}, trans, parse_guard("x == 1"))


def test_livelock_aborts_history():
    with pytest.raises(_pykernel.LivelockError):
        simulate_history(_livelock_net(), 1.0, 0, backend="python")


@needs_compiled
def test_livelock_aborts_run():
    with pytest.raises(SimulationError, match="aborted"):
        monte_carlo(_livelock_net(), 1.0, 4, 0, backend="compiled")


@pytest.mark.parametrize("backend", available_backends())
def test_two_state_estimate(backend):
    lam, mu, h = 0.01, 0.1, 100.0
    est = monte_carlo(_two_state_net(lam, mu), h, 20000, 5, backend=backend)
    assert abs(est.mean - _two_state_exact(lam, mu, h)) < 4 * est.std_error


@needs_compiled
def test_ci_coverage():
    lam, mu, h = 0.01, 0.1, 100.0
    exact = _two_state_exact(lam, mu, h)
    net = _two_state_net(lam, mu).compile()
    runs = 200
    hits = sum(
        abs(est.mean - exact) <= est.ci90_halfwidth
        for est in (monte_carlo(net, h, 2000, seed, backend="compiled") for seed in range(runs))
    )
    assert binomtest(hits, runs, 0.90).pvalue > 0.001


# -- determinism and kernel agreement ----------------------------------------

def test_rng_reference_stream():
    r = SplitMix64(0)
    assert r.next_u64() == 0xE220A8397B1DCDAF
    u = SplitMix64(1).uniform()
    assert 0.0 < u < 1.0


def test_history_seeds_vectorized():
    seeds = history_seeds(42, 10, 5)
    assert [int(s) for s in seeds] == [history_seed(42, i) for i in range(10, 15)]


@needs_compiled
@pytest.mark.parametrize("case", ["i", "iii", "v", "vi"])
def test_kernels_bit_identical(case):
    p = load_case(case)
    net = build_case_net(p).compile()
    seeds = history_seeds(7, 0, 300)
    fast = _kernel("compiled").simulate_many(net, p.t0, seeds)
    slow = _kernel("python").simulate_many(net, p.t0, seeds)
    np.testing.assert_array_equal(fast, slow)


def test_worker_count_does_not_change_result():
    net = build_case_net(load_case("iv"))
    a = monte_carlo(net, 70128.0, 9000, 11, workers=1)
    b = monte_carlo(net, 70128.0, 9000, 11, workers=2)
    assert a == b


def test_observer_invariants():
    p = load_case("vi")
    net = build_case_net(p).compile()
    ok_places = [i for i, pid in enumerate(net.place_ids) if pid.endswith("_OK")]
    flags = {m: (net.var_names.index(f"CCF_{m}"), net.place_ids.index(f"CCF_{m}_active"))
             for m in ("DD", "DUT", "DUU")}
    nb = net.var_names.index("nbOK")
    fired = set()

    def observer(t, j, marking, variables):
        assert 0.0 <= t <= p.t0
        assert sum(marking) == p.n + 3
        assert variables[nb] == sum(marking[i] for i in ok_places)
        for vi, pi in flags.values():
            assert variables[vi] == marking[pi]
        if j >= 0:
            fired.add(net.transition_ids[j])

    for i in range(200):
        simulate_history(net, p.t0, history_seed(3, i), observer=observer, check=True)
    assert "C1_test" in fired and "C1_repair_DD" in fired


def test_trace_format():
    p = load_case("iv")
    text = format_trace(build_case_net(p), p.t0, history_seed(42, 0))
    lines = text.splitlines()
    assert lines[0].startswith("0.000000 init ")
    assert lines[-1].startswith("fraction ")
    frac = float(lines[-1].split()[1])
    assert frac == pytest.approx(simulate_history(build_case_net(p), p.t0, history_seed(42, 0)), abs=1e-12)
    times = [float(line.split()[0]) for line in lines[1:-1]]
    assert times == sorted(times)
    assert all("|" in line for line in lines[1:-1])


def test_case_estimate_agrees_with_markov():
    p = load_case("iii")
    res = pfd_avg_petri(p, histories=100_000, seed=1)
    mk = pfd_avg_markov(p).value
    assert abs(res.value - mk) < 4 * res.ci90_halfwidth / 1.645
    assert "histories: 100000" in res.diagnostics


def test_python_fallback_when_extension_missing():
    code = (
        "import sys; sys.modules['pfdavg.petri._ckernel'] = None\n"
        "from pfdavg.petri import available_backends, default_backend\n"
        "assert available_backends() == ['python'], available_backends()\n"
        "assert default_backend() == 'python'\n"
    )
    subprocess.run([sys.executable, "-c", code], check=True)


def test_backend_forced_by_environment(monkeypatch):
    monkeypatch.setenv("PFDAVG_BACKEND", "python")
    assert default_backend() == "python"
    monkeypatch.setenv("PFDAVG_BACKEND", "fortran")
    with pytest.raises(RuntimeError):
        default_backend()
