import pytest

from erlaws.young_tower import PHI, PHI2, TowerObservableSpec, build_example_tower

# Acceptance lines collected during the run, echoed in the terminal summary.
ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def tower_plain():
    return build_example_tower(beta=2.0, kappa=0.01, modified=False)


@pytest.fixture(scope="session")
def tower_mod():
    return build_example_tower(beta=2.0, kappa=0.01, modified=True)


@pytest.fixture(scope="session")
def phi_plain(tower_plain):
    return TowerObservableSpec(tower_plain, PHI)


@pytest.fixture(scope="session")
def phi2_mod(tower_mod):
    return TowerObservableSpec(tower_mod, PHI2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
