"""Sparse dependency graphs of multivariate time series seen through
invertible per-sensor nonlinearities of a latent linear VAR."""

from .data import Dataset, GroundTruth, read_csv, write_csv
from .evaluation import adjacency_from_coeffs, nmse, pd_pfa, roc_auc, split_dataset
from .model import ModelA, ModelB, SensorMapA, SensorMapB, VarCoefficients
from .optim import DualState, StepSizes
from .synth import LorenzConfig, gen_lorenz96, gen_nlvar, gen_var_coeffs, make_nlvar_dataset
from .training import (
    TrainConfig,
    fit_linear_var,
    init_identity_a,
    init_identity_b,
    select_lambda,
    train,
    train_formulation_a,
    train_formulation_b,
    train_linear,
)

__version__ = "0.1.0"
