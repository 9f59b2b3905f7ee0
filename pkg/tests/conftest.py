"""Shared equilibria, built once per session."""

import pytest

from app.services.spectral import SpectralSolver
from app.services.steady_state import SteadyStateSolver


@pytest.fixture(scope="session")
def unstable_star():
    """gamma = 6/5, kappa = 1e3 on a coarse grid, with its growing mode"""
    profile = SteadyStateSolver.solve_liquid_star(1.2, 1e3, 200)
    return profile, SpectralSolver.growth_rate_of(profile)


@pytest.fixture(scope="session")
def stable_star():
    profile = SteadyStateSolver.solve_liquid_star(1.2, 2.0, 64)
    return profile, SpectralSolver.growth_rate_of(profile)


@pytest.fixture(scope="session")
def small_pencil():
    profile = SteadyStateSolver.solve_liquid_star(1.2, 100.0, 64)
    return SpectralSolver.assemble(profile)
