import numpy as np
import pytest

from wipcom import ChainGeometry, default_geometry, make_default_truth


def random_geometry(rng, n_links=None, total_mass=None) -> ChainGeometry:
    L = int(n_links or rng.integers(1, 9))
    return ChainGeometry(
        link_lengths=rng.uniform(0.1, 0.8, L),
        joint_lower=np.full(L, -2.0),
        joint_upper=np.full(L, 2.0),
        total_mass=float(total_mass or rng.uniform(5.0, 150.0)),
    )


def random_beta(rng, geom: ChainGeometry) -> np.ndarray:
    """Positive masses summing to M, CoMs scattered around each link."""
    L = geom.n_links
    m = rng.dirichlet(np.ones(L)) * geom.total_mass
    local = np.column_stack([rng.uniform(-0.2, 1.0, L) * geom.link_lengths,
                             rng.uniform(-0.1, 0.1, L), rng.uniform(-0.1, 0.1, L)])
    return np.column_stack([m[:, None] * local, m]).reshape(-1)


@pytest.fixture
def geom():
    return default_geometry()


@pytest.fixture
def beta_true(geom):
    return make_default_truth(geom)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
