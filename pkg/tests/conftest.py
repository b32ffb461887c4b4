import numpy as np
import pytest

from chsmc import potentials as pot
from chsmc import smc, solver
from chsmc.grid import Grid


@pytest.fixture
def grid1d():
    return Grid(shape=(64,), lengths=(1.0,))


@pytest.fixture
def grid2d():
    return Grid(shape=(12, 10), lengths=(1.0, 2.0))


@pytest.fixture
def grid3d():
    return Grid(shape=(8, 8, 8), lengths=(0.4, 0.4, 0.4))


def zero_potential():
    """Potential with B = beta = pi = 0 (linearizes the flow)."""
    return pot.custom(B=lambda r: 0.0, beta=lambda r: 0.0,
                      pi=lambda r: 0.0, pi_lipschitz=0.0,
                      Pi=lambda r: 0.0)


def zero_field(X, t):
    return np.zeros_like(X[0])


def constant_field(c):
    return lambda X, t: np.full_like(X[0], c)


def neumann_problem(grid, spec, phi0, rho=0.0, eps=1e-2, tau=1.0,
                    g=zero_field, phistar=zero_field):
    return solver.ProblemData(
        grid=grid, spec=spec, phi0=phi0, g=g, phistar=phistar,
        bc=solver.neumann_bc(), tau=tau,
        control=smc.SmcParams(rho=rho, eps=eps))


def dirichlet_problem(grid, spec, phi0, rho=0.0, eps=1e-2, tau=1.0,
                      g=zero_field, phistar=zero_field, datum=None,
                      with_target_derivatives=True):
    kw = {}
    if with_target_derivatives:
        kw = dict(dphistar_dt=zero_field,
                  lap_phistar=zero_field)
    return solver.ProblemData(
        grid=grid, spec=spec, phi0=phi0, g=g, phistar=phistar,
        bc=solver.dirichlet_bc(datum or (lambda x, t: 0.0)), tau=tau,
        control=smc.SmcParams(rho=rho, eps=eps), **kw)
