"""Classical and weighted robustness of STL formulas over discrete signals.

Signals are ``(l, T)`` arrays (``l`` features, ``T`` samples) or batches of
shape ``(n, l, T)``; a 1-D array is read as a single-feature signal. All
evaluators work on batches internally and return one value per signal.
"""
from __future__ import annotations

import numpy as np

from .formula import (Always, And, Binary, Eventually, Formula, Not, Or, Pred,
                      Temporal, TrueF, Weighted, horizon)


class InsufficientSignalError(ValueError):
    pass


def as_signal(s) -> tuple[np.ndarray, bool]:
    """Return ``(batch, single)`` where batch has shape ``(n, l, T)``."""
    arr = np.asarray(s)
    if arr.dtype.kind not in "fiu":
        raise TypeError(f"signal must be numeric, got dtype {arr.dtype}")
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    if arr.ndim == 1:
        arr, single = arr[None, None, :], True
    elif arr.ndim == 2:
        arr, single = arr[None], True
    elif arr.ndim == 3:
        single = False
    else:
        raise ValueError(f"signal must be 1-, 2- or 3-dimensional, got shape {arr.shape}")
    if arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ValueError(f"signal must have at least one feature and one sample, got shape {arr.shape[1:]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("signal contains non-finite values")
    return arr, single


def check_sigma(sigma: float) -> float:
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be a finite positive number, got {sigma!r}")
    return sigma


def _check_length(phi: Formula, S: np.ndarray, k: int) -> None:
    if k < 0:
        raise ValueError(f"time index must be nonnegative, got {k}")
    need = k + horizon(phi)
    if need > S.shape[2]:
        raise InsufficientSignalError(
            f"insufficient signal length: evaluating at k={k} needs {need} samples, signal has {S.shape[2]}")


def _affine(node: Pred, x: np.ndarray) -> np.ndarray:
    # sequential accumulation over features so the result does not depend on BLAS
    a = node.a
    acc = a[0] * x[:, 0]
    for j in range(1, a.shape[0]):
        acc = acc + a[j] * x[:, j]
    return node.c - acc


def _aggregate(w: np.ndarray, R: np.ndarray, sigma: float):
    """Weighted softmin of each row of ``R``; returns ``(y, locals)``.

    Columns with zero weight never enter the computation, so they cannot
    influence the result even through rounding.
    """
    support = w > 0
    if not support.any():
        raise ValueError("all weights of an operator are zero")
    if support.all():
        ws, Rs = w, R
    else:
        ws, Rs = w[support], R[:, support]
    finite = np.isfinite(Rs)
    if finite.all():
        shift = Rs.min(axis=1, keepdims=True)
        e = np.exp(-(Rs - shift) / sigma)
        s = e / e.sum(axis=1, keepdims=True)
        wbar = ws / ws.sum()
        ws_s = wbar * s
        den = ws_s.sum(axis=1)
        y = (ws_s * Rs).sum(axis=1) / den
        # the exact value is a convex combination; keep rounding from leaving the hull
        y = np.clip(y, shift[:, 0], Rs.max(axis=1))
        return y, (support, ws, Rs, s, wbar, den)
    # +inf inputs (from TRUE) carry no softmin mass; any -inf input dominates
    Rf = np.where(finite, Rs, 0.0)
    has_neg = np.isneginf(Rs).any(axis=1)
    all_pos = ~finite.any(axis=1)
    big = np.where(finite, Rs, np.inf)
    shift = np.where(finite.any(axis=1), big.min(axis=1), 0.0)[:, None]
    e = np.where(finite, np.exp(-(Rf - shift) / sigma), 0.0)
    tot = e.sum(axis=1, keepdims=True)
    s = np.divide(e, tot, out=np.zeros_like(e), where=tot > 0)
    wbar = ws / ws.sum()
    ws_s = wbar * s
    den = ws_s.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = (ws_s * Rf).sum(axis=1) / den
    y = np.where(all_pos, np.inf, y)
    y = np.where(has_neg, -np.inf, y)
    return y, (support, ws, Rs, s, wbar, den)


def softmin_aggregate(w_raw, r, sigma: float) -> float:
    """Weighted softmin of ``r``: ``sum(wbar*s*r) / sum(wbar*s)``.

    ``wbar`` are the normalized weights and ``s`` the softmax of ``-r/sigma``.
    """
    w = np.asarray(w_raw, dtype=np.float64).reshape(-1)
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    check_sigma(sigma)
    if w.shape != r.shape or w.size == 0:
        raise ValueError(f"weights and values must have equal nonzero length, got {w.size} and {r.size}")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(r))):
        raise ValueError("non-finite input to softmin aggregate")
    if np.any(w < 0):
        raise ValueError("negative weight")
    y, _ = _aggregate(w, r[None, :], sigma)
    return float(y[0])


class _WeightedEval:
    """One weighted-robustness pass over a batch, optionally recording a tape."""

    def __init__(self, S, sigma, tape=None):
        self.S = S
        self.sigma = sigma
        self.tape = tape
        self.memo: dict[tuple[int, int], tuple[np.ndarray, int]] = {}

    def __call__(self, node: Formula, k: int) -> tuple[np.ndarray, int]:
        key = (id(node), k)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        tape = self.tape
        idx = -1
        if isinstance(node, Pred):
            x = self.S[:, :, k]
            val = _affine(node, x)
            if tape is not None:
                idx = tape.record_pred(node, x, val)
        elif isinstance(node, TrueF):
            val = np.full(self.S.shape[0], np.inf, dtype=self.S.dtype)
            if tape is not None:
                idx = tape.record_const(val)
        elif isinstance(node, Not):
            cv, ci = self(node.child, k)
            val = -cv
            if tape is not None:
                idx = tape.record_neg(ci, val)
        elif isinstance(node, Weighted):
            if isinstance(node, Binary):
                kids = [self(node.left, k), self(node.right, k)]
            else:
                kids = [self(node.child, k + t) for t in node.interval]
            R = np.stack([v for v, _ in kids], axis=1)
            dual = isinstance(node, (Or, Eventually))
            if dual:
                R = -R
            y, local = _aggregate(node.effective_weights(), R, self.sigma)
            val = -y if dual else y
            if tape is not None:
                idx = tape.record_aggregate(node, [i for _, i in kids], dual, R, y, local, val)
        else:
            raise TypeError(f"not a formula node: {node!r}")
        self.memo[key] = (val, idx)
        return val, idx


def _weighted_batch(S, phi, k, sigma, tape=None):
    _check_length(phi, S, k)
    check_sigma(sigma)
    ev = _WeightedEval(S, sigma, tape)
    val, idx = ev(phi, k)
    return val, idx


def robustness_weighted(s, phi: Formula, k: int = 0, sigma: float = 1.0):
    """Weighted robustness of ``phi`` on ``s`` at time ``k``.

    Returns a float for a single signal, an array for a batch.
    """
    S, single = as_signal(s)
    val, _ = _weighted_batch(S, phi, k, sigma)
    return float(val[0]) if single else val


def _classical(node, S, k, memo):
    key = (id(node), k)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(node, Pred):
        val = _affine(node, S[:, :, k])
    elif isinstance(node, TrueF):
        val = np.full(S.shape[0], np.inf, dtype=S.dtype)
    elif isinstance(node, Not):
        val = -_classical(node.child, S, k, memo)
    elif isinstance(node, And):
        val = np.minimum(_classical(node.left, S, k, memo), _classical(node.right, S, k, memo))
    elif isinstance(node, Or):
        val = np.maximum(_classical(node.left, S, k, memo), _classical(node.right, S, k, memo))
    elif isinstance(node, Temporal):
        vals = np.stack([_classical(node.child, S, k + t, memo) for t in node.interval], axis=1)
        val = vals.min(axis=1) if isinstance(node, Always) else vals.max(axis=1)
    else:
        raise TypeError(f"not a formula node: {node!r}")
    memo[key] = val
    return val


def robustness_classical(s, phi: Formula, k: int = 0):
    """Min/max robustness of ``phi``; operator weights are ignored."""
    S, single = as_signal(s)
    _check_length(phi, S, k)
    val = _classical(phi, S, k, {})
    return float(val[0]) if single else val


def boolean_sat(s, phi: Formula, k: int = 0):
    """True where the signal satisfies ``phi`` (robustness >= 0)."""
    r = robustness_classical(s, phi, k)
    return r >= 0 if np.ndim(r) else bool(r >= 0)


__all__ = [
    "InsufficientSignalError", "as_signal", "softmin_aggregate",
    "robustness_weighted", "robustness_classical", "boolean_sat",
]
