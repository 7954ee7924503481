"""Labeled time-series windows: occupancy CSV ingestion, windowing, scaling, splits."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OCCUPANCY_FEATURES = ("Temperature", "Humidity", "Light", "CO2", "HumidityRatio")
OCCUPANCY_FILES = ("datatraining.txt", "datatest.txt", "datatest2.txt")
DATA_DIR_ENV = "WSTL_DATA_DIR"


class DataError(ValueError):
    pass


@dataclass
class RawTable:
    """Rows in file order; ``features`` is ``(n_rows, l)``, labels are +1/-1.

    ``starts`` holds the first row of each source file; windows never cross
    these boundaries.
    """

    features: np.ndarray
    labels: np.ndarray
    dates: list[str] = field(default_factory=list)
    feature_names: tuple[str, ...] = OCCUPANCY_FEATURES
    starts: tuple[int, ...] = (0,)

    def __len__(self):
        return len(self.labels)


@dataclass
class LabeledWindow:
    signal: np.ndarray  # (l, K_I)
    label: int

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.label!r}")


def stack(windows: list[LabeledWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Windows as ``X`` of shape ``(n, l, K_I)`` and labels ``y``."""
    if not windows:
        return np.zeros((0, 0, 0)), np.zeros(0, dtype=int)
    return (np.stack([w.signal for w in windows]),
            np.array([w.label for w in windows], dtype=int))


def resolve_path(path) -> Path:
    """Return ``path`` if it exists, else try it under ``$WSTL_DATA_DIR``."""
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get(DATA_DIR_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    return p


def find_occupancy_files() -> list[Path] | None:
    """The three UCI occupancy files from ``$WSTL_DATA_DIR`` or ``./data``, if all present."""
    for base in filter(None, [os.environ.get(DATA_DIR_ENV), "data"]):
        paths = [Path(base) / name for name in OCCUPANCY_FILES]
        if all(p.is_file() for p in paths):
            return paths
    return None


def load_occupancy_csv(path) -> RawTable:
    """Read one occupancy-schema CSV (header matched case-insensitively).

    A leading row-index column without a header name is tolerated, as in
    the UCI distribution.
    """
    path = resolve_path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise DataError(f"{path}: empty file")
        names = [h.strip().lower() for h in header]
        if names and names[0] == "":
            names = names[1:]
            skip_first = True
        else:
            skip_first = False
        wanted = ("date",) + OCCUPANCY_FEATURES + ("Occupancy",)
        cols = {}
        for name in wanted:
            try:
                cols[name] = names.index(name.lower())
            except ValueError:
                raise DataError(f"{path}: missing column {name}") from None
        feats, labels, dates = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if skip_first or len(row) == len(names) + 1:
                row = row[1:]
            if len(row) < len(names):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(names)}")
            vals = []
            for name in OCCUPANCY_FEATURES + ("Occupancy",):
                cell = row[cols[name]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}: cannot parse {name} value {cell!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"{path}: row {lineno}: non-finite {name} value {cell!r}")
                vals.append(v)
            occ = vals.pop()
            if occ not in (0.0, 1.0):
                raise DataError(f"{path}: row {lineno}: Occupancy must be 0 or 1, got {occ:g}")
            feats.append(vals)
            labels.append(1 if occ == 1.0 else -1)
            dates.append(row[cols["date"]].strip())
    if not labels:
        raise DataError(f"{path}: no data rows")
    return RawTable(np.array(feats, dtype=np.float64), np.array(labels, dtype=int), dates)


LABEL_COLUMNS = ("label", "occupancy")
_SKIP_COLUMNS = ("", "date", "time", "timestamp")


def load_labeled_csv(path) -> RawTable:
    """Read an occupancy file, or any CSV with a ``label`` column.

    In the generic form every column other than ``label`` and an optional
    ``date``/``time`` column is a numeric feature, in file order. Labels
    may be 0/1 or -1/+1.
    """
    path = resolve_path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    names = [h.strip().lower() for h in header or []]
    if not names or "occupancy" in names:
        return load_occupancy_csv(path)
    if "label" not in names:
        raise DataError(f"{path}: no label column (expected 'label' or the occupancy schema)")
    lab = names.index("label")
    feat_cols = [i for i, n in enumerate(names) if i != lab and n not in _SKIP_COLUMNS]
    if not feat_cols:
        raise DataError(f"{path}: no feature columns")
    feats, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(names):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(names)}")
            try:
                vals = [float(row[i]) for i in feat_cols]
                y = float(row[lab])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"{path}: row {lineno}: non-finite feature value")
            if y not in (0.0, 1.0, -1.0):
                raise DataError(f"{path}: row {lineno}: label must be 0/1 or -1/+1, got {row[lab].strip()!r}")
            feats.append(vals)
            labels.append(1 if y == 1.0 else -1)
    if not labels:
        raise DataError(f"{path}: no data rows")
    return RawTable(np.array(feats, dtype=np.float64), np.array(labels, dtype=int), [],
                    tuple(header[i].strip() for i in feat_cols))


def load_tables(paths) -> RawTable:
    """Load and concatenate several files in the given order."""
    if not paths:
        raise DataError("no data files given")
    tables = [load_labeled_csv(p) for p in paths]
    for p, t in zip(paths[1:], tables[1:]):
        if t.features.shape[1] != tables[0].features.shape[1]:
            raise DataError(f"{p}: {t.features.shape[1]} features, first file has {tables[0].features.shape[1]}")
    return concat_tables(tables)


def write_labeled_csv(path, windows: list[LabeledWindow]) -> None:
    """Write windows back to back as rows ``x1..xl,label`` (one row per time step)."""
    dim = windows[0].signal.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(dim)] + ["label"])
        for win in windows:
            for col in win.signal.T:
                w.writerow([repr(float(v)) for v in col] + [win.label])


def concat_tables(tables: list[RawTable]) -> RawTable:
    starts, offset = [], 0
    for t in tables:
        starts.extend(offset + s for s in t.starts)
        offset += len(t)
    return RawTable(np.concatenate([t.features for t in tables]),
                    np.concatenate([t.labels for t in tables]),
                    [d for t in tables for d in t.dates],
                    tables[0].feature_names, tuple(starts))


def window(rows: RawTable, length: int) -> list[LabeledWindow]:
    """Greedy, non-overlapping windows of ``length`` rows sharing one label.

    Scanning forward, a window is emitted whenever the next ``length`` rows
    come from one file and all carry the same label (then the scan jumps past it); otherwise the
    scan advances by one row.
    """
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    X, y = rows.features, rows.labels
    # run_end[i]: first index after i where the label or the source file changes
    n = len(y)
    breaks = set(rows.starts)
    run_end = np.empty(n, dtype=int)
    end = n
    for i in range(n - 1, -1, -1):
        if i < n - 1 and (y[i] != y[i + 1] or i + 1 in breaks):
            end = i + 1
        run_end[i] = end
    out, i = [], 0
    while i + length <= n:
        if run_end[i] - i >= length:
            out.append(LabeledWindow(X[i:i + length].T.copy(), int(y[i])))
            i += length
        else:
            i += 1
    return out


@dataclass
class Scaler:
    """Per-feature affine map ``(x - shift) / scale``."""

    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.shift == 0) and np.all(self.scale == 1))

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Scale an ``(..., l, T)`` array."""
        if self.is_identity:
            return X
        return (X - self.shift[:, None]) / self.scale[:, None]

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return X * self.scale[:, None] + self.shift[:, None]


def fit_scale(windows: list[LabeledWindow], standardize: bool = True, floor: float = 1e-9) -> Scaler:
    if not windows:
        raise ValueError("cannot fit a scaler on zero windows")
    dim = windows[0].signal.shape[0]
    if not standardize:
        return Scaler.identity(dim)
    flat = np.concatenate([w.signal for w in windows], axis=1)
    return Scaler(flat.mean(axis=1), np.maximum(flat.std(axis=1), floor))


def apply_scale(scaler: Scaler, windows: list[LabeledWindow]) -> list[LabeledWindow]:
    if scaler.is_identity:
        return list(windows)
    return [LabeledWindow(scaler.transform(w.signal), w.label) for w in windows]


@dataclass
class DataSplit:
    train: list[LabeledWindow]
    test: list[LabeledWindow]
    scaler: Scaler

    @property
    def dim(self) -> int:
        return self.train[0].signal.shape[0]


def split(windows: list[LabeledWindow], test_fraction: float = 0.2, seed: int = 0,
          standardize: bool = True) -> DataSplit:
    """Seeded split, stratified by label; the scaler is fitted on train only.

    The overall test count is ``round(test_fraction * n)``, shared between
    the classes by largest remainder.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.array([w.label for w in windows], dtype=int)
    classes = (1, -1)
    counts = {c: int(np.sum(labels == c)) for c in classes}
    for c in classes:
        if counts[c] == 0:
            raise DataError(f"class {c:+d} has no windows")
    n_test = int(round(test_fraction * len(windows)))
    quota = {c: test_fraction * counts[c] for c in classes}
    alloc = {c: int(np.floor(quota[c])) for c in classes}
    for c in sorted(classes, key=lambda c: -(quota[c] - alloc[c])):
        if sum(alloc.values()) >= n_test:
            break
        alloc[c] += 1
    if n_test >= len(windows):
        raise DataError(f"test_fraction={test_fraction} leaves no training windows out of {len(windows)}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        test_idx.extend(idx[:alloc[c]])
        train_idx.extend(idx[alloc[c]:])
    train_idx = sorted(train_idx)
    test_idx = sorted(test_idx)
    train = [windows[i] for i in train_idx]
    test = [windows[i] for i in test_idx]
    return DataSplit(train, test, fit_scale(train, standardize))


def synth_generate(n_per_class: int, length: int, seed: int = 0, noise: float = 0.1) -> list[LabeledWindow]:
    """Two-feature windows separable by ``G[0, length-1](x1 <= 0)``.

    Positives keep ``x1`` at or below ``-0.1`` throughout; negatives push
    ``x1`` to at least ``+0.1`` at three or more time points. The second
    feature is an uninformative distractor.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if length < 3:
        raise ValueError("length must be >= 3 so negatives can violate at three points")
    rng = np.random.default_rng(seed)
    out = []
    for label in (1, -1):
        for _ in range(n_per_class):
            x1 = -rng.uniform(0.2, 1.0, size=length)
            if label == -1:
                n_bad = int(rng.integers(3, length + 1))
                bad = rng.choice(length, size=n_bad, replace=False)
                x1[bad] = rng.uniform(0.2, 1.0, size=n_bad)
            x1 += rng.uniform(-noise, noise, size=length)
            x2 = rng.uniform(-1.0, 1.0, size=length)
            out.append(LabeledWindow(np.vstack([x1, x2]), label))
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def read_signal_csv(path) -> np.ndarray:
    """A signal file: one row per time step, one column per feature.

    A non-numeric first row is taken as a header. Occupancy-schema files
    are recognized and reduced to their five feature columns.
    """
    path = resolve_path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    head = [c.strip().lower() for c in rows[0]]
    if "occupancy" in head or "co2" in head:
        return load_occupancy_csv(path).features.T
    try:
        [float(c) for c in rows[0]]
        body = rows
    except ValueError:
        body = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.size == 0:
        raise DataError(f"{path}: expected a rectangular numeric table")
    return data.T
