import numpy as np
import pytest


def rel_error(analytic, numeric):
    """Norm-wise relative error, safe when both gradients vanish."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, echoed once more at the end of the session
ACCEPTANCE = []


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
