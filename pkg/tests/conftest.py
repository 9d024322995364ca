import pytest

from pfdavg.model import SafetyParams, load_case

CASES = ("i", "ii", "iii", "iv", "v", "vi")


@pytest.fixture(params=CASES)
def case_id(request):
    return request.param


@pytest.fixture
def case_params(case_id):
    return load_case(case_id)


def make_params(**overrides):
    base = dict(m=1, n=2, lambda_d=2.7e-6, dc=0.5, ptc=0.9, beta_dd=0.02, beta_dut=0.05,
                beta_duu=0.05, mu_dd=0.0417, mu_dut=0.0417, t1=4383.0, t0=70128.0)
    base.update(overrides)
    return SafetyParams(**base)


def zero_rate_params(m=1, n=2):
    return make_params(m=m, n=n, lambda_d=0.0)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    passed = bool(passed)
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(ACCEPTANCE_LINES[number])
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
