"""torusgas: interacting-particle simulation lab on a periodic box.

Equilibrium hop (Kawasaki) and birth-death (Glauber) dynamics over a
grand-canonical Gibbs measure, with the estimators and experiments needed to
watch the hop dynamics turn into the birth-death dynamics as its jump kernel
spreads out.
"""

__version__ = "0.1.0"

from .geometry import CellList, TorusDomain, min_image_disp, neighbors, wrap
from .kernels import BACKEND
from .model import (Configuration, JumpKernel, ModelSpec, PairPotential,
                    RateBoundError, a_eps_eval, alpha_from_k1, glauber_rates,
                    kawasaki_rate, lahht_check, phi_eval, relative_energy,
                    total_energy)
from .stats import Estimate
from .testfunctions import TestFunction

__all__ = [
    "BACKEND", "CellList", "Configuration", "Estimate", "JumpKernel",
    "ModelSpec", "PairPotential", "RateBoundError", "TestFunction",
    "TorusDomain", "a_eps_eval", "alpha_from_k1", "glauber_rates",
    "kawasaki_rate", "lahht_check", "min_image_disp", "neighbors",
    "phi_eval", "relative_energy", "total_energy", "wrap",
]
