import pytest

from fkmerton import Grid, preset, solve_fixed_point

DEFAULT_BOX = [(-6.0, 6.0)]


@pytest.fixture(scope="session")
def paper_model():
    return preset("paper-example")


@pytest.fixture(scope="session")
def paper_grid(paper_model):
    return Grid.build(paper_model.T, 201, DEFAULT_BOX, [401])


@pytest.fixture(scope="session")
def paper_solve(paper_model, paper_grid):
    """Converged paper-example run at default resolution, history kept."""
    return solve_fixed_point(paper_model, paper_grid, keep_history=True)


@pytest.fixture(scope="session")
def merton_model():
    return preset("merton-constant")


@pytest.fixture(scope="session")
def merton_grid(merton_model):
    return Grid.build(merton_model.T, 201, DEFAULT_BOX, [401])


@pytest.fixture(scope="session")
def merton_solve(merton_model, merton_grid):
    return solve_fixed_point(merton_model, merton_grid, n_max=30, keep_history=True)
