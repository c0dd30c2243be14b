import numpy as np
import pytest

from genlab.verify import finite_difference_grad, rel_error


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fd_check(build_loss, tensors, h=1e-5):
    """Analytic vs central-difference gradients for every tensor in ``tensors``.

    ``build_loss`` rebuilds the scalar loss tensor from the current data.
    Returns the worst relative error.
    """
    from genlab.tensor import no_grad

    for t in tensors:
        t.grad = None
    build_loss().backward()
    worst = 0.0
    for t in tensors:
        with no_grad():
            num = finite_difference_grad(lambda: build_loss().item(), t.data, h)
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        worst = max(worst, rel_error(analytic, num))
    return worst


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
