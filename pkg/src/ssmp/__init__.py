"""Simulation and verification toolkit for self-similar Markov processes.

Markov additive processes, the Lamperti transform, spatial inversion and
Monte Carlo checks of duality, h-transform and moment identities.
"""
from .kernel import (CompoundPoisson, Dirac, Gaussian, LevySpec, StablePart, TwoPoint, Uniform,
                     characteristic_exponent, sample_increment)
from .lamperti import (BeyondLifetime, additive_functional, embed_unabsorbed, invert_path, invert_table,
                       lamperti_forward, lamperti_inverse)
from .maps import (MapSpec, check_reversibility, make_skew_product, map_characteristic, matrix_exponent,
                   negate_xi, sample_map_marginal, simulate_map, stationary_measure)
from .paths import CadlagPath, MapPath, SsmpPath, sup_distance
from .processes import (Bes3, Bessel, BrownianAbs1D, FreeBessel, IsotropicStable, Stable1D, simulate,
                        simulate_marginal)
from .rng import RngStream

__all__ = [
    "CompoundPoisson", "Dirac", "Gaussian", "LevySpec", "StablePart", "TwoPoint", "Uniform",
    "characteristic_exponent", "sample_increment",
    "BeyondLifetime", "additive_functional", "embed_unabsorbed", "invert_path", "invert_table",
    "lamperti_forward", "lamperti_inverse",
    "MapSpec", "check_reversibility", "make_skew_product", "map_characteristic", "matrix_exponent", "negate_xi",
    "sample_map_marginal", "simulate_map", "stationary_measure",
    "CadlagPath", "MapPath", "SsmpPath", "sup_distance",
    "Bes3", "Bessel", "BrownianAbs1D", "FreeBessel", "IsotropicStable", "Stable1D", "simulate", "simulate_marginal",
    "RngStream",
]

__version__ = "0.1.0"
