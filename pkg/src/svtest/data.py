"""Dataset model, cluster partitions, nesting checks and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataValueError, InputError, MissingColumnError, NestingError

NO_CLUSTERING = "none"


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Partition:
    """A partition of ``N`` observations into ``G`` clusters.

    ``assignment`` holds dense ids ``0..G-1``; ``labels[c]`` is the original
    label of cluster ``c`` (kept for reporting only).
    """

    name: str
    assignment: np.ndarray
    labels: tuple
    cluster_index: tuple = field(repr=False, compare=False)

    @classmethod
    def from_labels(cls, name: str, raw: Sequence) -> "Partition":
        raw = list(raw)
        if not raw:
            raise InputError(f"partition {name!r} is empty")
        ids: dict = {}
        assignment = np.empty(len(raw), dtype=np.intp)
        for i, lab in enumerate(raw):
            assignment[i] = ids.setdefault(lab, len(ids))
        return cls._build(name, assignment, tuple(ids))

    @classmethod
    def from_assignment(cls, name: str, assignment, labels=None) -> "Partition":
        """Build from integer ids that are already dense (``0..G-1``)."""
        a = np.asarray(assignment, dtype=np.intp)
        if a.ndim != 1 or a.size == 0:
            raise InputError(f"partition {name!r} needs a non-empty 1-d assignment")
        G = int(a.max()) + 1
        if a.min() < 0 or np.bincount(a, minlength=G).min() == 0:
            return cls.from_labels(name, a.tolist())
        return cls._build(name, a, tuple(range(G)) if labels is None else tuple(labels))

    @classmethod
    def singletons(cls, N: int, name: str = NO_CLUSTERING) -> "Partition":
        return cls._build(name, np.arange(N, dtype=np.intp), tuple(range(N)))

    @classmethod
    def _build(cls, name, assignment, labels) -> "Partition":
        G = len(labels)
        order = np.argsort(assignment, kind="stable")
        bounds = np.searchsorted(assignment[order], np.arange(G + 1))
        index = tuple(_frozen(order[bounds[c] : bounds[c + 1]], np.intp) for c in range(G))
        return cls(name, _frozen(assignment, np.intp), tuple(labels), index)

    @property
    def G(self) -> int:
        return len(self.labels)

    @property
    def N(self) -> int:
        return self.assignment.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.G)

    @property
    def is_singletons(self) -> bool:
        return self.G == self.N

    def renamed(self, name: str) -> "Partition":
        return Partition(name, self.assignment, self.labels, self.cluster_index)


@dataclass(frozen=True)
class NestingViolation:
    """Fine cluster ``fine_label`` contains observations ``obs_a`` and ``obs_b``
    that sit in different coarse clusters."""

    fine_label: object
    obs_a: int
    obs_b: int
    coarse_a: object
    coarse_b: object

    def describe(self, fine_name="fine", coarse_name="coarse") -> str:
        return (
            f"{fine_name} cluster {self.fine_label!r} spans {coarse_name} clusters "
            f"{self.coarse_a!r} (obs {self.obs_a}) and {self.coarse_b!r} (obs {self.obs_b})"
        )


def validate_nesting(fine: Partition, coarse: Partition) -> tuple[bool, NestingViolation | None]:
    """Check that every fine cluster lies inside a single coarse cluster.

    Returns ``(True, None)`` or ``(False, violation)`` where the violation is
    the first offending observation pair in data order.
    """
    if fine.N != coarse.N:
        raise InputError(f"partition lengths differ: {fine.N} vs {coarse.N}")
    first = np.array([idx[0] for idx in fine.cluster_index], dtype=np.intp)
    ref = coarse.assignment[first][fine.assignment]
    bad = np.flatnonzero(ref != coarse.assignment)
    if bad.size == 0:
        return True, None
    j = int(bad[0])
    h = fine.assignment[j]
    i = int(first[h])
    return False, NestingViolation(
        fine.labels[h], i, j, coarse.labels[coarse.assignment[i]], coarse.labels[coarse.assignment[j]]
    )


@dataclass(frozen=True)
class ClusterNesting:
    """Chain of nested partitions, finest first.

    ``levels[0]`` is usually the singleton partition ("no clustering"). ``p``
    counts the levels above the finest one, so the sequential procedure
    selects an index in ``0..p``.
    """

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise InputError("a nesting needs at least one level")
        names = [lv.name for lv in levels]
        if len(set(names)) != len(names):
            raise InputError(f"level names must be unique, got {names}")
        for fine, coarse in zip(levels, levels[1:]):
            ok, v = validate_nesting(fine, coarse)
            if not ok:
                raise NestingError(
                    f"level {fine.name!r} is not nested in {coarse.name!r}: "
                    + v.describe(fine.name, coarse.name),
                    v,
                )

    @property
    def p(self) -> int:
        return len(self.levels) - 1

    @property
    def names(self) -> list[str]:
        return [lv.name for lv in self.levels]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"unknown clustering level {name!r}; have {self.names}") from None

    def __getitem__(self, key) -> Partition:
        if isinstance(key, str):
            key = self.index(key)
        return self.levels[key]

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class RegressionData:
    """Outcome, regressors of interest ``X1``, nuisance regressors ``X2`` and
    cluster labels (level name -> label vector)."""

    y: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    labels: dict = field(default_factory=dict)
    y_name: str = "y"
    x1_names: tuple = ()
    x2_names: tuple = ()

    def __post_init__(self):
        y = _frozen(self.y).reshape(-1)
        N = y.size
        X1 = _frozen(self.X1)
        if X1.ndim == 1:
            X1 = _frozen(X1.reshape(-1, 1))
        X2 = np.asarray(self.X2, dtype=float)
        if X2.size == 0:
            X2 = np.empty((N, 0))
        elif X2.ndim == 1:
            X2 = X2.reshape(-1, 1)
        X2 = _frozen(X2)
        if N < 1:
            raise InputError("need at least one observation")
        if X1.ndim != 2 or X1.shape[0] != N or X1.shape[1] < 1:
            raise InputError(f"X1 must be N x k1 with k1 >= 1, got {X1.shape} for N={N}")
        if X2.ndim != 2 or X2.shape[0] != N:
            raise InputError(f"X2 must have {N} rows, got {X2.shape}")
        for nm, a in (("y", y), ("X1", X1), ("X2", X2)):
            if not np.all(np.isfinite(a)):
                raise DataValueError(f"{nm} contains non-finite values")
        k = X1.shape[1] + X2.shape[1]
        if N <= k:
            raise InputError(f"need N > k1 + k2 for positive residual dof (N={N}, k={k})")
        labels = {}
        for name, lab in dict(self.labels).items():
            lab = np.asarray(lab)
            if lab.shape != (N,):
                raise InputError(f"cluster labels {name!r} have shape {lab.shape}, expected ({N},)")
            labels[name] = _frozen(lab, lab.dtype)
        x1_names = tuple(self.x1_names) or tuple(f"x1_{j}" for j in range(X1.shape[1]))
        x2_names = tuple(self.x2_names) or tuple(f"x2_{j}" for j in range(X2.shape[1]))
        if len(x1_names) != X1.shape[1] or len(x2_names) != X2.shape[1]:
            raise InputError("column name count does not match regressor count")
        for attr, val in (
            ("y", y), ("X1", X1), ("X2", X2), ("labels", labels),
            ("x1_names", x1_names), ("x2_names", x2_names),
        ):
            object.__setattr__(self, attr, val)

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def k1(self) -> int:
        return self.X1.shape[1]

    @property
    def k2(self) -> int:
        return self.X2.shape[1]

    @property
    def k(self) -> int:
        return self.k1 + self.k2

    @property
    def X(self) -> np.ndarray:
        return np.hstack([self.X1, self.X2])

    def partition(self, name: str) -> Partition:
        if name == NO_CLUSTERING and name not in self.labels:
            return Partition.singletons(self.N)
        if name not in self.labels:
            raise InputError(f"no cluster labels named {name!r}; have {sorted(self.labels)}")
        return Partition.from_labels(name, self.labels[name].tolist())

    def focus(self, cols) -> "RegressionData":
        """Keep ``cols`` of X1 as regressors of interest; move the rest into X2."""
        cols = [cols] if isinstance(cols, (int, np.integer)) else list(cols)
        rest = [j for j in range(self.k1) if j not in cols]
        return RegressionData(
            self.y,
            self.X1[:, cols],
            np.hstack([self.X1[:, rest], self.X2]),
            self.labels,
            self.y_name,
            tuple(self.x1_names[j] for j in cols),
            tuple(self.x1_names[j] for j in rest) + self.x2_names,
        )

    def subset(self, keep) -> "RegressionData":
        keep = np.asarray(keep)
        return RegressionData(
            self.y[keep], self.X1[keep], self.X2[keep],
            {k: v[keep] for k, v in self.labels.items()},
            self.y_name, self.x1_names, self.x2_names,
        )


def fixed_effect_dummies(part: Partition, drop_first: bool) -> tuple[np.ndarray, list[str]]:
    D = np.zeros((part.N, part.G))
    D[np.arange(part.N), part.assignment] = 1.0
    names = [f"fe[{part.name}={lab}]" for lab in part.labels]
    if drop_first:
        return D[:, 1:], names[1:]
    return D, names


def _parse_float(cell: str, col: str, row: int) -> float:
    s = cell.strip()
    if s == "" or s.upper() in {"NA", "NAN", "NULL", "."}:
        raise DataValueError(f"missing value in column {col!r} at data row {row}")
    try:
        v = float(s)
    except ValueError:
        raise DataValueError(f"non-numeric value {cell!r} in column {col!r} at data row {row}") from None
    if not math.isfinite(v):
        raise DataValueError(f"non-finite value {cell!r} in column {col!r} at data row {row}")
    return v


def load_csv(
    path,
    y_col: str,
    x1_cols: Sequence[str],
    x2_cols: Sequence[str] = (),
    cluster_cols: Sequence[str] = (),
    add_intercept: bool = True,
    fixed_effects_level: str | None = None,
) -> tuple[RegressionData, ClusterNesting]:
    """Read a regression dataset from CSV.

    ``cluster_cols`` are ordered finest to coarsest; the singleton partition
    ``"none"`` is prepended automatically. Cluster cells may be arbitrary
    strings and are re-encoded to dense integer ids in order of appearance.
    With ``fixed_effects_level`` one dummy per cluster of that column is
    appended to X2 (the first is dropped when an intercept is present).
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    x1_cols, x2_cols, cluster_cols = list(x1_cols), list(x2_cols), list(cluster_cols)
    if not x1_cols:
        raise InputError("need at least one regressor of interest")
    if NO_CLUSTERING in cluster_cols:
        cluster_cols.remove(NO_CLUSTERING)
    wanted = [y_col, *x1_cols, *x2_cols, *cluster_cols]
    if fixed_effects_level:
        wanted.append(fixed_effects_level)
    pos = {h: j for j, h in enumerate(header)}
    for c in wanted:
        if c not in pos:
            raise MissingColumnError(f"column {c!r} not found in {path.name}; header is {header}")
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataValueError(f"data row {r} has {len(row)} fields, header has {len(header)}")

    def numeric(col):
        j = pos[col]
        return np.array([_parse_float(row[j], col, r) for r, row in enumerate(rows, start=1)])

    def labels(col):
        j = pos[col]
        out = []
        for r, row in enumerate(rows, start=1):
            s = row[j].strip()
            if s == "":
                raise DataValueError(f"missing cluster label in column {col!r} at data row {r}")
            out.append(s)
        return out

    N = len(rows)
    y = numeric(y_col)
    X1 = np.column_stack([numeric(c) for c in x1_cols]) if N else np.empty((0, len(x1_cols)))
    x2_parts, x2_names = [], []
    if add_intercept:
        x2_parts.append(np.ones((N, 1)))
        x2_names.append("const")
    for c in x2_cols:
        x2_parts.append(numeric(c)[:, None])
        x2_names.append(c)
    raw_labels = {c: labels(c) for c in dict.fromkeys([*cluster_cols, *( [fixed_effects_level] if fixed_effects_level else [])])}
    if fixed_effects_level:
        fe = Partition.from_labels(fixed_effects_level, raw_labels[fixed_effects_level])
        D, names = fixed_effect_dummies(fe, drop_first=add_intercept)
        x2_parts.append(D)
        x2_names.extend(names)
    X2 = np.hstack(x2_parts) if x2_parts else np.empty((N, 0))

    levels = [Partition.singletons(N)]
    levels += [Partition.from_labels(c, raw_labels[c]) for c in cluster_cols]
    nesting = ClusterNesting(tuple(levels))
    data = RegressionData(
        y, X1, X2,
        {c: np.array(raw_labels[c], dtype=object) for c in cluster_cols},
        y_col, tuple(x1_cols), tuple(x2_names),
    )
    return data, nesting
