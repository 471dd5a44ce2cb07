import pytest

import torusgas as tg


@pytest.fixture(scope="session")
def poisson_model():
    """Ideal gas: zero potential, z V = 2."""
    return tg.ModelSpec(tg.TorusDomain(1, 10.0), tg.PairPotential.zero(),
                        0.2, tg.JumpKernel.uniform_ball(0.5, 1))


@pytest.fixture(scope="session")
def well_model():
    """The workhorse interacting model: square well J=1, R=0.5 at z=0.2."""
    return tg.ModelSpec(tg.TorusDomain(1, 20.0),
                        tg.PairPotential.square_well(1.0, 0.5),
                        0.2, tg.JumpKernel.uniform_ball(0.5, 1))


@pytest.fixture(scope="session")
def hardcore_model():
    return tg.ModelSpec(tg.TorusDomain(1, 20.0),
                        tg.PairPotential.hardcore_square_well(0.1, 1.0, 0.5),
                        0.2, tg.JumpKernel.uniform_ball(0.5, 1))


@pytest.fixture(scope="session")
def well_samples(well_model):
    """A medium Gibbs sample set shared by estimator tests."""
    from torusgas.gibbs import sample_gibbs
    return sample_gibbs(well_model, 6000, burn_in=3000, seed=101)


@pytest.fixture(scope="session")
def poisson_samples(poisson_model):
    from torusgas.gibbs import sample_gibbs
    return sample_gibbs(poisson_model, 6000, burn_in=2000, seed=102)
