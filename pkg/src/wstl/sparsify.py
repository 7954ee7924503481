"""Weight sparsification: threshold and top-s pruning, the prunable-fraction
bound for Always operators, and training with Bernoulli gate variables."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dataset import DataSplit, Scaler, apply_scale
from .formula import (Always, And, Eventually, Formula, Or, Weighted, copy_formula,
                      weighted_nodes)
from .learn import EpochStats, GateConfig, TrainConfig, fit_formula, fold_scaler
from .semantics import as_signal, check_sigma, robustness_weighted


class PruneError(ValueError):
    pass


_OP_NAMES = {Always: "G", Eventually: "F", And: "&", Or: "|"}


@dataclass
class OperatorPrune:
    path: tuple[int, ...]
    op: str
    kept: list[int]
    zeroed: list[int]
    pre: np.ndarray
    post: np.ndarray

    @property
    def where(self) -> str:
        return "root" if not self.path else "/".join(map(str, self.path))


@dataclass
class PruneReport:
    operators: list[OperatorPrune] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(len(o.pre) for o in self.operators)

    @property
    def surviving(self) -> int:
        return sum(len(o.kept) for o in self.operators)

    @property
    def fraction_pruned(self) -> float:
        return 1.0 - self.surviving / self.total if self.total else 0.0

    def to_text(self) -> str:
        lines = [f"pruned {self.total - self.surviving} of {self.total} weights "
                 f"({100 * self.fraction_pruned:.2f}%)"]
        for o in self.operators:
            lines.append(f"  {o.op} at {o.where}: kept {len(o.kept)}/{len(o.pre)} -> indices {o.kept}")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["operator_path", "operator", "index", "pre_weight", "post_weight"])
            for o in self.operators:
                for i, (a, b) in enumerate(zip(o.pre, o.post)):
                    w.writerow([o.where, o.op, i, repr(float(a)), repr(float(b))])


def _apply(phi: Formula, choose) -> tuple[Formula, PruneReport]:
    out = copy_formula(phi)
    report = PruneReport()
    for path, node in weighted_nodes(out):
        wbar = node.weights / node.weights.sum()
        keep = choose(wbar)
        where = "root" if not path else "/".join(map(str, path))
        if not keep.any():
            raise PruneError(f"operator fully pruned at {where}")
        post = np.where(keep, wbar, 0.0)
        node.weights = post
        node.sparsified = node.sparsified or not keep.all()
        report.operators.append(OperatorPrune(path, _OP_NAMES[type(node)],
                                              np.flatnonzero(keep).tolist(),
                                              np.flatnonzero(~keep).tolist(), wbar, post))
    return out, report


def prune_tau(phi: Formula, tau: float) -> tuple[Formula, PruneReport]:
    """Zero every normalized weight ``<= tau``; survivors keep their normalized value."""
    if not 0 <= tau < 1:
        raise ValueError(f"tau must lie in [0, 1), got {tau}")
    return _apply(phi, lambda wbar: wbar > tau)


def prune_top_sbar(phi: Formula, sbar: int) -> tuple[Formula, PruneReport]:
    """Keep the ``sbar`` largest normalized weights of every operator.

    Ties go to the lower index (earlier time point).
    """
    for path, node in weighted_nodes(phi):
        if not 1 <= sbar <= len(node.weights):
            where = "root" if not path else "/".join(map(str, path))
            raise ValueError(f"sbar={sbar} out of range 1..{len(node.weights)} for operator at {where}")

    def choose(wbar):
        order = sorted(range(len(wbar)), key=lambda i: (-wbar[i], i))
        keep = np.zeros(len(wbar), dtype=bool)
        keep[order[:sbar]] = True
        return keep

    return _apply(phi, choose)


# -- prunable fraction ----------------------------------------------------------

@dataclass
class PrunableFraction:
    robustness: float
    contributions: np.ndarray
    delta: float
    gamma_a: float
    wbar_pos: float
    wbar_neg: float
    fraction_raw: float

    @property
    def fraction(self) -> float:
        return float(np.clip(self.fraction_raw, 0.0, 1.0))

    @property
    def side(self) -> str:
        return "positive" if self.robustness > 0 else "negative"

    @property
    def prunable_mass(self) -> float:
        """Normalized weight mass on the sign-deciding side that may be zeroed."""
        return self.fraction * (self.wbar_pos if self.robustness > 0 else self.wbar_neg)


def fraction_bound(delta: float, gamma_a: float, wbar_side: float, positive: bool) -> float:
    """Raw prunable fraction from its ingredients.

    For positive robustness ``1 + delta*(1 - w+)/(gamma_a*w+)``; for
    negative robustness ``1 + gamma_a*(1 - w-)/(delta*w-)``.
    """
    if positive:
        return 1.0 + delta * (1.0 - wbar_side) / (gamma_a * wbar_side)
    return 1.0 + gamma_a * (1.0 - wbar_side) / (delta * wbar_side)


def prunable_fraction(s, phi: Always, k: int = 0, sigma: float = 1.0) -> PrunableFraction:
    """Share of an Always operator's sign-deciding weight mass that can be
    zeroed before its robustness changes sign.

    Contributions ``z_i = e^{-r_i/sigma} r_i / sum_j e^{-r_j/sigma}`` split
    into positive and negative parts; ``delta`` is the smallest negative
    and ``gamma_a`` the largest positive contribution. The bound is exact
    when the positive (resp. negative) contributions are equal and
    otherwise an estimate.
    """
    if not isinstance(phi, Always):
        raise TypeError("prunable_fraction analyses an Always operator at the root")
    check_sigma(sigma)
    S, _ = as_signal(s)
    if S.shape[0] != 1:
        raise ValueError("prunable_fraction takes a single signal")
    rob = robustness_weighted(S[0], phi, k, sigma)
    if rob == 0:
        raise ValueError("robustness is exactly 0; its sign is undefined")
    r = np.array([robustness_weighted(S[0], phi.child, k + t, sigma) for t in phi.interval])
    shift = r.min()
    e = np.exp(-(r - shift) / sigma)
    z = e * r / e.sum()
    wbar = phi.weights / phi.weights.sum()
    pos, neg = r > 0, r < 0
    if not pos.any():
        raise ValueError("no positive contributions; gamma_a is undefined")
    if not neg.any():
        raise ValueError("no negative contributions; delta is undefined")
    w_pos, w_neg = float(wbar[pos].sum()), float(wbar[neg].sum())
    if w_pos >= 1.0 or w_neg >= 1.0 or w_pos == 0.0 or w_neg == 0.0:
        raise ValueError(
            f"inconsistent weights: contributions have mixed signs but one side carries all "
            f"normalized weight (w+={w_pos:.6g}, w-={w_neg:.6g})")
    delta, gamma_a = float(z[neg].min()), float(z[pos].max())
    side = w_pos if rob > 0 else w_neg
    return PrunableFraction(float(rob), z, delta, gamma_a, w_pos, w_neg,
                            fraction_bound(delta, gamma_a, side, rob > 0))


# -- gate variables -------------------------------------------------------------

@dataclass
class GateSet:
    """Final gate probabilities ``g``, hard mask ``g_s`` and regularizer weights."""

    g: np.ndarray
    g_s: np.ndarray
    lambda1: float
    lambda2: float

    @property
    def m(self) -> int:
        return len(self.g)

    @property
    def open_count(self) -> int:
        return int(self.g_s.sum())


def gate_regularizer(g, lambda1: float, lambda2: float) -> tuple[float, np.ndarray]:
    """Bi-modal plus L1 penalty ``lambda1*sum g(1-g) + lambda2*sum g`` and its gradient."""
    g = np.asarray(g, dtype=np.float64)
    value = lambda1 * float(np.sum(g * (1.0 - g))) + lambda2 * float(np.sum(g))
    return value, lambda1 * (1.0 - 2.0 * g) + lambda2


def finalize_gates(phi: Formula, threshold: float = 0.5) -> tuple[Formula, np.ndarray, np.ndarray]:
    """Turn gate probabilities into hard masks on a copy of ``phi``.

    Weights behind closed gates (``g < threshold``) become 0 and survivors
    keep their normalized value. Returns ``(formula, g, mask)``.
    """
    out = copy_formula(phi)
    gs, masks = [], []
    for path, node in weighted_nodes(out):
        if node.gates is None:
            raise ValueError("formula has no gates attached")
        keep = node.gates >= threshold
        if not keep.any():
            where = "root" if not path else "/".join(map(str, path))
            raise PruneError(f"operator fully pruned at {where}: every gate closed")
        gs.append(node.gates.copy())
        masks.append(keep.astype(int))
        wbar = node.weights / node.weights.sum()
        node.weights = np.where(keep, wbar, 0.0)
        node.sparsified = node.sparsified or not keep.all()
        node.gates = None
        node.gate_sample = None
    return out, np.concatenate(gs), np.concatenate(masks)


def train_gated(data: DataSplit, structure: Formula, cfg: TrainConfig | None = None,
                lambda1: float = 0.0, lambda2: float = 0.0, seed: int = 0,
                resample: bool = True, init: float = 0.95) -> tuple[Formula, GateSet, list[EpochStats]]:
    """Train ``structure`` with one Bernoulli gate per operator weight.

    Each mini-batch draws ``g_s ~ Bernoulli(g)`` and evaluates with weights
    ``w * g_s``; gates receive the straight-through gradient plus the exact
    regularizer gradient and stay clipped to [0, 1]. Gates ``>= 0.5`` keep
    their weight at the end, the rest are zeroed.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("lambda1 and lambda2 must be nonnegative")
    cfg = cfg or TrainConfig()
    scaler = data.scaler if cfg.scale else Scaler.identity(data.dim)
    gate_cfg = GateConfig(lambda1, lambda2, init, resample, seed)
    phi, history = fit_formula(apply_scale(scaler, data.train), structure, cfg, gate_cfg)
    phi, g, mask = finalize_gates(phi)
    return fold_scaler(phi, scaler), GateSet(g, mask, lambda1, lambda2), history


# Searched in order; the first point meeting the caller's target wins.
GATE_GRID = tuple((l1, l2) for l1 in (0.0, 0.5, 2.0) for l2 in (0.5, 1.0, 2.0))
