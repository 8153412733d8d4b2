"""Data-poisoning attacks on ridge regression with numerical and categorical features."""

from .bilevel import AttackState, hypergradient, leader_objective, refit
from .bounds import VariableBounds, compute_bounds
from .dataset import Dataset, FeatureSchema, PoisonSet, encode_and_scale, init_poison, load_csv, load_schema, split
from .localopt import OptimizerConfig, optimize_batch
from .oracle import OracleConfig, brute_force
from .ridge import RegressionParams, cv_lambda, design_matrix, fit, kkt_residual, mse, predict
from .strategies import StrategyConfig, flip_sample, run_ias, run_ifcf, run_sas

__version__ = "0.1.0"
