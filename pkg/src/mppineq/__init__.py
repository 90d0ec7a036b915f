"""Exponential inequalities for stochastic integrals of marked point processes.

Build a compensator, integrate a weight against the compensated jump measure,
and compare simulated or enumerated tail probabilities with closed-form bounds.
"""
from .bounds import (freedman_bound, bt_self_normalized_bound, optimal_lambda, pena_gauss_bound,
                     pena_poisson_bound, ratio_bound)
from .engines import HypothesisError, make_engine
from .expo import exponent_compensator, gaussian, poissonian
from .marks import point_mass, rademacher, two_point, uniform, finite_discrete
from .mc import (TailEvent, check_martingale_ratio, check_supermartingale, compare_bounds, estimate_tail,
                 estimate_tails)
from .models import atom_grid_model, compound_poisson_model, heavy_on_left_check, hl2_condition_check
from .oracle import DiscreteModel, enumerate_paths, exact_mean_ratio, exact_tail
from .pp_core import CompensatorSpec, sample_path, validate_compensator
from .stoch_int import WeightSpec, build_martingale, identity_weight

__version__ = "0.1.0"
