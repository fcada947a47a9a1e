"""Matrix, mask and feature-table containers plus CSV round-tripping.

CSV layout shared by every table: the first row holds the column ids, the first
column holds the row ids, and cell (1, 1) carries a tag (the EDP kind, the
feature axis, or ``mask:<cr>``). Floats are written with ``repr`` so a round
trip is bit-exact.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class DataFormatError(ValueError):
    """Malformed or invariant-violating table data."""


class DegenerateMetricError(ValueError):
    """The error metric has a zero denominator (nothing unobserved, or all-zero truth there)."""


class EdpKind(str, enum.Enum):
    TopDisplacement = "TopDisplacement"  # m
    BaseShear = "BaseShear"  # N


class FeatureAxis(str, enum.Enum):
    GroundMotion = "GroundMotion"
    Material = "Material"


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_ids(ids: Sequence[str], n: int, what: str) -> tuple[str, ...]:
    ids = tuple(str(i) for i in ids)
    if len(ids) != n:
        raise DataFormatError(f"{what}: {len(ids)} ids for {n} entries")
    if len(set(ids)) != n:
        raise DataFormatError(f"{what}: duplicate ids")
    return ids


def default_ids(prefix: str, n: int) -> tuple[str, ...]:
    width = max(3, len(str(n - 1)))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(n))


@dataclass(frozen=True, eq=False)
class EdpMatrix:
    """N x M table of one engineering demand parameter (records x material samples)."""

    kind: EdpKind
    values: np.ndarray
    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]

    def __init__(self, kind, values, row_ids=None, col_ids=None):
        values = _frozen(values)
        if values.ndim != 2:
            raise DataFormatError("EDP matrix must be two-dimensional")
        n, m = values.shape
        if n < 2 or m < 2:
            raise DataFormatError(f"EDP matrix must be at least 2x2, got {n}x{m}")
        if not np.all(np.isfinite(values)):
            raise DataFormatError("EDP matrix entries must be finite")
        object.__setattr__(self, "kind", EdpKind(kind))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", _check_ids(row_ids or default_ids("gm", n), n, "row ids"))
        object.__setattr__(self, "col_ids", _check_ids(col_ids or default_ids("mat", m), m, "column ids"))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, EdpMatrix):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.row_ids == other.row_ids
            and self.col_ids == other.col_ids
            and np.array_equal(self.values, other.values)
        )

    def with_values(self, values) -> "EdpMatrix":
        return EdpMatrix(self.kind, values, self.row_ids, self.col_ids)


def column_budget(n_rows: int, cr: float) -> int:
    """Observed entries per column: n_rows * cr rounded half-up."""
    return int(math.floor(n_rows * cr + 0.5))


@dataclass(frozen=True, eq=False)
class ObservationMask:
    """Which (record, material) cells were simulated; exactly round(N*cr) per column."""

    flags: np.ndarray
    cr: float

    def __init__(self, flags, cr: float):
        flags = _frozen(flags, dtype=bool)
        if flags.ndim != 2:
            raise DataFormatError("mask must be two-dimensional")
        if not 0.0 < cr <= 1.0:
            raise DataFormatError(f"cr must lie in (0, 1], got {cr}")
        b = column_budget(flags.shape[0], cr)
        if b < 1:
            raise DataFormatError(f"budget round({flags.shape[0]}*{cr}) is zero")
        counts = flags.sum(axis=0)
        if np.any(counts != b):
            bad = int(np.flatnonzero(counts != b)[0])
            raise DataFormatError(f"column {bad} has {counts[bad]} observed entries, expected {b}")
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "cr", float(cr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.flags.shape

    @property
    def budget(self) -> int:
        return column_budget(self.flags.shape[0], self.cr)

    def __eq__(self, other):
        if not isinstance(other, ObservationMask):
            return NotImplemented
        return self.cr == other.cr and np.array_equal(self.flags, other.flags)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Side information: one row per record (IMs) or per material sample (parameters)."""

    values: np.ndarray
    axis: FeatureAxis
    dim_names: tuple[str, ...]
    row_ids: tuple[str, ...]

    def __init__(self, values, axis, dim_names, row_ids=None):
        values = _frozen(values)
        if values.ndim != 2 or values.shape[1] < 1:
            raise DataFormatError("feature table must be rows x dims with dims >= 1")
        if not np.all(np.isfinite(values)):
            raise DataFormatError("feature entries must be finite")
        axis = FeatureAxis(axis)
        prefix = "gm" if axis is FeatureAxis.GroundMotion else "mat"
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "dim_names", _check_ids(dim_names, values.shape[1], "dim names"))
        object.__setattr__(
            self, "row_ids", _check_ids(row_ids or default_ids(prefix, values.shape[0]), values.shape[0], "row ids")
        )

    def __eq__(self, other):
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (
            self.axis == other.axis
            and self.dim_names == other.dim_names
            and self.row_ids == other.row_ids
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class Factorization:
    """X ~ a @ b with a: N x R and b: R x M."""

    a: np.ndarray
    b: np.ndarray

    def __init__(self, a, b):
        a, b = _frozen(a), _frozen(b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DataFormatError("factor shapes do not chain")
        r = a.shape[1]
        if not 1 <= r < min(a.shape[0], b.shape[1]):
            raise DataFormatError(f"rank {r} must satisfy 1 <= R < min(N, M)")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DataFormatError("factor entries must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    def product(self) -> np.ndarray:
        return self.a @ self.b


def masked_relative_error(truth, estimate, mask) -> float:
    """Relative Frobenius error over the cells the mask leaves unobserved.

    ``mask`` is an :class:`ObservationMask` or a plain boolean array of the same
    shape. Raises :class:`DegenerateMetricError` when the unobserved truth has
    zero norm (including the case of nothing unobserved).
    """
    x = truth.values if isinstance(truth, EdpMatrix) else np.asarray(truth, dtype=float)
    est = np.asarray(estimate, dtype=float)
    flags = mask.flags if isinstance(mask, ObservationMask) else np.asarray(mask, dtype=bool)
    if x.shape != est.shape or x.shape != flags.shape:
        raise ValueError(f"shape mismatch: truth {x.shape}, estimate {est.shape}, mask {flags.shape}")
    hidden = ~flags
    # scale first so tiny (subnormal) truths do not underflow to a zero norm
    s = float(np.max(np.abs(x[hidden]), initial=0.0))
    if s == 0.0:
        raise DegenerateMetricError("no unobserved cells with nonzero truth")
    return float(np.linalg.norm((x[hidden] - est[hidden]) / s) / np.linalg.norm(x[hidden] / s))


# ---------------------------------------------------------------- CSV i/o


def _write_table(path, tag: str, col_ids, row_ids, cells) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([tag, *col_ids])
        for rid, row in zip(row_ids, cells):
            w.writerow([rid, *row])


def _read_table(path):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need a header row and at least one data row")
    header = rows[0]
    tag, col_ids = header[0].strip(), [c.strip() for c in header[1:]]
    row_ids, cells = [], []
    for i, r in enumerate(rows[1:], start=1):
        if len(r) != len(header):
            missing = "missing" if len(r) < len(header) else "extra"
            raise DataFormatError(
                f"{path}: row {i} ({r[0]!r}) has {len(r) - 1} cells, expected {len(col_ids)} ({missing} cell)"
            )
        row_ids.append(r[0].strip())
        cells.append([c.strip() for c in r[1:]])
    return tag, col_ids, row_ids, cells


def _parse_floats(path, col_ids, row_ids, cells) -> np.ndarray:
    out = np.empty((len(row_ids), len(col_ids)))
    for i, row in enumerate(cells):
        for j, c in enumerate(row):
            if c == "":
                raise DataFormatError(f"{path}: missing cell at row {row_ids[i]!r}, column {col_ids[j]!r}")
            try:
                v = float(c)
            except ValueError:
                raise DataFormatError(
                    f"{path}: non-numeric cell {c!r} at row {row_ids[i]!r}, column {col_ids[j]!r}"
                ) from None
            if not math.isfinite(v):
                raise DataFormatError(
                    f"{path}: non-finite cell {c!r} at row {row_ids[i]!r}, column {col_ids[j]!r}"
                )
            out[i, j] = v
    return out


def write_matrix(matrix: EdpMatrix, path) -> None:
    _write_table(
        path, matrix.kind.value, matrix.col_ids, matrix.row_ids, [[repr(float(v)) for v in r] for r in matrix.values]
    )


def read_matrix(path) -> EdpMatrix:
    tag, col_ids, row_ids, cells = _read_table(path)
    try:
        kind = EdpKind(tag)
    except ValueError:
        raise DataFormatError(f"{path}: unknown matrix kind tag {tag!r}") from None
    values = _parse_floats(path, col_ids, row_ids, cells)
    return EdpMatrix(kind, values, row_ids, col_ids)


def write_estimate(values, like: EdpMatrix, path) -> None:
    """Write an N x M estimate using the ids and kind of ``like``."""
    write_matrix(like.with_values(values), path)


def write_mask(mask: ObservationMask, path, row_ids=None, col_ids=None) -> None:
    n, m = mask.shape
    _write_table(
        path,
        f"mask:{mask.cr!r}",
        col_ids or default_ids("mat", m),
        row_ids or default_ids("gm", n),
        mask.flags.astype(int).tolist(),
    )


def read_mask(path) -> ObservationMask:
    tag, col_ids, row_ids, cells = _read_table(path)
    if not tag.startswith("mask:"):
        raise DataFormatError(f"{path}: expected a 'mask:<cr>' tag, got {tag!r}")
    try:
        cr = float(tag[5:])
    except ValueError:
        raise DataFormatError(f"{path}: bad cr in tag {tag!r}") from None
    flags = np.zeros((len(row_ids), len(col_ids)), dtype=bool)
    for i, row in enumerate(cells):
        for j, c in enumerate(row):
            if c not in ("0", "1"):
                raise DataFormatError(f"{path}: mask cell {c!r} at row {row_ids[i]!r}, column {col_ids[j]!r}")
            flags[i, j] = c == "1"
    return ObservationMask(flags, cr)


def write_features(table: FeatureTable, path) -> None:
    _write_table(
        path, table.axis.value, table.dim_names, table.row_ids, [[repr(float(v)) for v in r] for r in table.values]
    )


def read_features(path) -> FeatureTable:
    tag, col_ids, row_ids, cells = _read_table(path)
    try:
        axis = FeatureAxis(tag)
    except ValueError:
        raise DataFormatError(f"{path}: unknown feature axis tag {tag!r}") from None
    return FeatureTable(_parse_floats(path, col_ids, row_ids, cells), axis, col_ids, row_ids)
