"""Weighted Signal Temporal Logic: robustness, gradients, and formula learning."""
from .dataset import (DataSplit, LabeledWindow, Scaler, load_occupancy_csv, load_tables, split,
                      synth_generate, window)
from .estimator import WSTLClassifier
from .formula import (Always, And, Eventually, Formula, Interval, Not, Or, Pred, TrueF, always,
                      conj, disj, eventually, horizon, params, validate)
from .grad import backward, forward_record, grad_check, value_and_grad
from .learn import TrainConfig, loss_discrete_diag, loss_exponential, train
from .metrics import ConfusionCounts, classify, metrics
from .semantics import boolean_sat, robustness_classical, robustness_weighted, softmin_aggregate
from .sparsify import prunable_fraction, prune_tau, prune_top_sbar, train_gated
from .text import ParseError, parse, parse_template, to_text

__version__ = "0.1.0"
