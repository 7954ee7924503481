"""Losses and mini-batch gradient training of formula parameters."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .dataset import DataSplit, LabeledWindow, Scaler, apply_scale, stack
from .formula import (GATE, OPERATOR_WEIGHT, Formula, Pred, Weighted, copy_formula,
                      horizon, params, validate, weighted_nodes)
from .grad import backward, forward_record
from .semantics import robustness_weighted

log = logging.getLogger(__name__)

EXP_CLAMP = 50.0


class TrainingError(RuntimeError):
    pass


def _margins(r, labels, zeta):
    r = np.asarray(r, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if r.shape != labels.shape:
        raise ValueError(f"robustness and labels differ in shape: {r.shape} vs {labels.shape}")
    if not zeta > 0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    return labels * r


def loss_exponential(r, labels, zeta: float = 1.0) -> float:
    """``sum_j exp(-zeta * l_j * r_j)`` with the exponent capped at 50."""
    m = _margins(r, labels, zeta)
    return float(np.exp(np.minimum(-zeta * m, EXP_CLAMP)).sum())


def loss_exponential_grad(r, labels, zeta: float = 1.0) -> np.ndarray:
    """Derivative of :func:`loss_exponential` per sample; past the cap the
    slope of the cap point is kept so the descent direction survives."""
    m = _margins(r, labels, zeta)
    return -zeta * np.asarray(labels, dtype=np.float64) * np.exp(np.minimum(-zeta * m, EXP_CLAMP))


def loss_discrete_diag(r, labels, zeta: float = 1.0, gamma: float = 1e3) -> float:
    """Piecewise loss: ``zeta*l*r`` where ``l*r > 0``, else ``gamma``.

    Not differentiable; reported for diagnostics only.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    m = _margins(r, labels, zeta)
    return float(np.where(m > 0, zeta * m, gamma).sum())


# -- optimizers ---------------------------------------------------------------

class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.lr * grad


class Adam:
    def __init__(self, lr: float = 0.05, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- configuration ------------------------------------------------------------

@dataclass
class TrainConfig:
    zeta: float = 1.0
    sigma: float = 1.0
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 0.05
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    weight_floor: float = 1e-6
    scale: bool = True

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be an integer >= 1, got {self.epochs}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be an integer >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not self.weight_floor > 0:
            raise ValueError(f"weight_floor must be positive, got {self.weight_floor}")

    def make_optimizer(self):
        if self.optimizer == "sgd":
            return SGD(self.learning_rate)
        return Adam(self.learning_rate, self.beta1, self.beta2, self.adam_eps)


@dataclass
class DiagConfig:
    gamma: float = 1e3

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float


@dataclass
class GateConfig:
    """Gate-variable training options (see :func:`wstl.sparsify.train_gated`)."""

    lambda1: float = 0.0
    lambda2: float = 0.0
    init: float = 0.95
    resample: bool = True
    seed: int = 0


# -- training -----------------------------------------------------------------

def initialize(phi: Formula, rng: np.random.Generator) -> None:
    """Weights uniform(0.5, 1.5); coefficients normal(0, 1/sqrt(l)); offsets 0."""
    for _, node in phi.walk():
        if isinstance(node, Weighted):
            node.weights = rng.uniform(0.5, 1.5, size=len(node.weights))
            node.sparsified = False
            node.gates = None
            node.gate_sample = None
        elif isinstance(node, Pred):
            node.a = rng.normal(0.0, 1.0 / np.sqrt(node.dim), size=node.dim)
            node.c = np.float64(0.0)


def fold_scaler(phi: Formula, scaler: Scaler) -> Formula:
    """Rewrite predicates trained on scaled features to act on raw features.

    ``c - a.((s - shift)/scale)`` equals ``c' - a'.s`` with
    ``a' = a/scale`` and ``c' = c + a'.shift``.
    """
    out = copy_formula(phi)
    if scaler.is_identity:
        return out
    for _, node in out.walk():
        if isinstance(node, Pred):
            a = node.a / scaler.scale
            node.c = np.float64(node.c + float(np.dot(a, scaler.shift)))
            node.a = a
    return out


def predict_signs(phi: Formula, X, sigma: float = 1.0) -> np.ndarray:
    """+1 where weighted robustness at time 0 is >= 0, else -1."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        return np.zeros(0, dtype=int)
    r = robustness_weighted(X, phi, 0, sigma)
    return np.where(r >= 0, 1, -1)


def _check_structure(structure: Formula, windows: list[LabeledWindow]) -> int:
    if not windows:
        raise ValueError("no training windows")
    dim, length = windows[0].signal.shape
    problems = [p for p in validate(structure, dim) if "non-positive weight" not in p]
    if problems:
        raise ValueError("invalid structure: " + "; ".join(problems))
    if horizon(structure) > length:
        raise ValueError(f"structure needs {horizon(structure)} samples, windows have {length}")
    return dim


def fit_formula(train_windows: list[LabeledWindow], structure: Formula, cfg: TrainConfig,
                gate_cfg: GateConfig | None = None) -> tuple[Formula, list[EpochStats]]:
    """Gradient training on already-scaled windows; returns the formula in
    the same (scaled) coordinates and per-epoch statistics."""
    _check_structure(structure, train_windows)
    rng = np.random.default_rng(cfg.seed)
    phi = copy_formula(structure)
    initialize(phi, rng)
    ops = [node for _, node in weighted_nodes(phi)]
    gate_rng = None
    if gate_cfg is not None:
        gate_rng = np.random.default_rng(gate_cfg.seed)
        for node in ops:
            node.gates = np.full(len(node.weights), gate_cfg.init)
            node.gate_sample = None
    X, y = stack(train_windows)
    yf = y.astype(np.float64)
    view = params(phi)
    theta = view.values().astype(np.float64)
    weight_mask = view.mask(OPERATOR_WEIGHT)
    gate_mask = view.mask(GATE)
    opt = cfg.make_optimizer()
    history = []
    n = len(y)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if gate_cfg is not None:
                _set_gate_samples(ops, gate_cfg, gate_rng)
            r, tape = forward_record(X[idx], phi, 0, cfg.sigma)
            batch_loss = loss_exponential(r, yf[idx], cfg.zeta)
            grad = backward(tape, loss_exponential_grad(r, yf[idx], cfg.zeta))
            if gate_cfg is not None and gate_mask.any():
                g = theta[gate_mask]
                grad[gate_mask] += gate_cfg.lambda1 * (1.0 - 2.0 * g) + gate_cfg.lambda2
            if not (np.isfinite(batch_loss) and np.all(np.isfinite(grad))):
                raise TrainingError(_nonfinite_report(view, theta, grad, batch_loss, epoch))
            epoch_loss += batch_loss
            theta = opt.step(theta, grad)
            theta[weight_mask] = np.maximum(theta[weight_mask], cfg.weight_floor)
            if gate_mask.any():
                theta[gate_mask] = np.clip(theta[gate_mask], 0.0, 1.0)
            if not np.all(np.isfinite(theta)):
                raise TrainingError(_nonfinite_report(view, theta, grad, batch_loss, epoch))
            view.assign(theta)
        if gate_cfg is not None:
            g = theta[gate_mask]
            epoch_loss += gate_cfg.lambda1 * float(np.sum(g * (1 - g))) + gate_cfg.lambda2 * float(np.sum(g))
            _set_report_mask(ops, gate_cfg)
        acc = float(np.mean(predict_signs(phi, X, cfg.sigma) == y))
        history.append(EpochStats(epoch, float(epoch_loss), acc))
        log.info("epoch %d loss %.6g train accuracy %.4f", epoch, epoch_loss, acc)
    for node in ops:
        node.gate_sample = None
    return phi, history


def _set_gate_samples(ops, gate_cfg, rng):
    for node in ops:
        if gate_cfg.resample:
            node.gate_sample = (rng.random(len(node.gates)) < node.gates).astype(np.float64)
            if not node.gate_sample.any():
                # an operator needs one open gate to be evaluable
                node.gate_sample[int(np.argmax(node.gates))] = 1.0
        else:
            node.gate_sample = None


def _set_report_mask(ops, gate_cfg):
    for node in ops:
        if not gate_cfg.resample:
            node.gate_sample = None
            continue
        keep = (node.gates >= 0.5).astype(np.float64)
        node.gate_sample = keep if keep.any() else None


def _nonfinite_report(view, theta, grad, loss, epoch) -> str:
    bad = np.flatnonzero(~np.isfinite(theta) | ~np.isfinite(grad))
    where = view.describe(int(bad[0])) if bad.size else "no single parameter"
    return f"non-finite loss or gradient in epoch {epoch} (loss={loss!r}); offending parameter: {where}"


def train(data: DataSplit, structure: Formula, cfg: TrainConfig | None = None) -> tuple[Formula, list[EpochStats]]:
    """Learn the parameters of ``structure`` on ``data.train``.

    The returned formula acts on raw (unscaled) signals: when
    ``cfg.scale`` is set, training runs on standardized windows and the
    scaler is folded into the predicates afterwards.
    """
    cfg = cfg or TrainConfig()
    scaler = data.scaler if cfg.scale else Scaler.identity(data.dim)
    phi, history = fit_formula(apply_scale(scaler, data.train), structure, cfg)
    return fold_scaler(phi, scaler), history


def write_history_csv(path, history: list[EpochStats]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "train_accuracy"])
        for h in history:
            w.writerow([h.epoch, repr(h.loss), f"{h.train_accuracy:.6f}"])
