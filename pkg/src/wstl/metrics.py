"""Binary classification with formulas and the usual confusion-matrix measures."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import LabeledWindow
from .formula import Formula
from .semantics import robustness_weighted

MEASURES = ("accuracy", "sensitivity", "specificity", "ppv", "npv")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        t = np.asarray(y_true)
        p = np.asarray(y_pred)
        if t.shape != p.shape:
            raise ValueError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
        return cls(tp=int(np.sum((t == 1) & (p == 1))), fp=int(np.sum((t == -1) & (p == 1))),
                   tn=int(np.sum((t == -1) & (p == -1))), fn=int(np.sum((t == 1) & (p == -1))))


def _ratio(num, den):
    return num / den if den else None


def metrics(counts: ConfusionCounts) -> dict[str, float | None]:
    """Accuracy, sensitivity, specificity, PPV and NPV; ``None`` where undefined."""
    c = counts
    return {
        "accuracy": _ratio(c.tp + c.tn, c.total),
        "sensitivity": _ratio(c.tp, c.tp + c.fn),
        "specificity": _ratio(c.tn, c.tn + c.fp),
        "ppv": _ratio(c.tp, c.tp + c.fp),
        "npv": _ratio(c.tn, c.tn + c.fn),
    }


def classify(phi: Formula, window, sigma: float = 1.0) -> int:
    """+1 if the weighted robustness at time 0 is >= 0, else -1."""
    signal = window.signal if isinstance(window, LabeledWindow) else window
    return 1 if robustness_weighted(signal, phi, 0, sigma) >= 0 else -1


def evaluate(phi: Formula, X, y, sigma: float = 1.0) -> tuple[ConfusionCounts, dict]:
    X = np.asarray(X, dtype=np.float64)
    r = robustness_weighted(X, phi, 0, sigma) if len(X) else np.zeros(0)
    pred = np.where(r >= 0, 1, -1)
    counts = ConfusionCounts.from_labels(y, pred)
    return counts, metrics(counts)


def format_table(counts: ConfusionCounts, values: dict) -> str:
    rows = [("samples", str(counts.total)),
            ("tp / fp / tn / fn", f"{counts.tp} / {counts.fp} / {counts.tn} / {counts.fn}")]
    rows += [(name, "undefined" if values[name] is None else f"{values[name]:.4f}") for name in MEASURES]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {val:>12}" for name, val in rows)


def format_json(counts: ConfusionCounts, values: dict) -> str:
    out = {"counts": asdict(counts)}
    out.update({k: (None if v is None else round(v, 4)) for k, v in values.items()})
    return json.dumps(out, sort_keys=True)
