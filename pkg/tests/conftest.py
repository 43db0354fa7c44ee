import numpy as np
import pytest

from porosplit.mesh import SIDES, classify_boundary, generate_brick

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def mark_sides(mesh, default=("neumann", "neumann"), **overrides):
    rules = {s: default for s in SIDES}
    rules.update(overrides)
    return classify_boundary(mesh, rules)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_cube():
    return mark_sides(generate_brick(1, 1, 1), xmin=("dirichlet", "dirichlet"),
                      ymin=("neumann", "dirichlet"), zmin=("neumann", "dirichlet"))


@pytest.fixture
def brick8():
    return mark_sides(generate_brick(2, 2, 2), xmin=("dirichlet", "dirichlet"),
                      ymin=("neumann", "dirichlet"), zmin=("neumann", "dirichlet"))


@pytest.fixture
def distorted():
    mesh = generate_brick(3, 2, 2, box=((0.0, 2.0), (0.0, 1.0), (0.0, 0.5)), distortion=0.2,
                          seed=7)
    return mark_sides(mesh, xmin=("dirichlet", "dirichlet"), ymin=("neumann", "dirichlet"),
                      zmin=("neumann", "dirichlet"))
