"""Observation containers, covariate layout, validation, and CSV ingestion.

A capture-recapture record consists of a capture count ``d`` (at least one,
because only captured individuals are observed), a block ``x`` of fully
observed covariates, a block ``y`` of covariates that may be missing as a
unit, and the non-missingness indicator ``r``.  Validated datasets are
reordered so complete cases (``r = 1``) come first, which is the indexing
convention used throughout the likelihood code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import (
    CSVFormatError,
    DatasetValidationError,
    EmptyCompleteCasesError,
    InconsistentDimensionsError,
    MissingYError,
)

__all__ = [
    "CaptureModelSpec",
    "Observation",
    "CaptureDataset",
    "stack_z",
    "validate",
    "read_csv",
]


@dataclass(frozen=True)
class CaptureModelSpec:
    """Capture-count model family and covariate layout.

    Parameters
    ----------
    family : {"binomial", "poisson"}
        "binomial" for a fixed number of capture occasions, "poisson" for
        continuous-time experiments.
    n_occasions : int, optional
        Number of occasions K; required (and >= 1) for the binomial family.
    one_inflated : bool
        Whether the capture-count distribution carries a one-inflation
        parameter.
    dim_x, dim_y : int
        Widths of the fully observed and missing-prone covariate blocks.
    """

    family: str
    n_occasions: int | None = None
    one_inflated: bool = False
    dim_x: int = 0
    dim_y: int = 1

    def __post_init__(self):
        if self.family not in ("binomial", "poisson"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "binomial":
            if self.n_occasions is None or self.n_occasions < 1:
                raise ValueError("binomial family requires n_occasions >= 1")
        if self.dim_x < 0 or self.dim_y < 1:
            raise ValueError("need dim_x >= 0 and dim_y >= 1")

    @property
    def dim_z(self) -> int:
        """Length of the stacked covariate (1, x, y)."""
        return 1 + self.dim_x + self.dim_y

    @property
    def n_params(self) -> int:
        """Number of capture-model parameters: beta plus omega if inflated."""
        return self.dim_z + (1 if self.one_inflated else 0)


@dataclass(frozen=True)
class Observation:
    """One captured individual: count, covariates, missingness indicator."""

    d: int
    x: np.ndarray
    y: np.ndarray | None
    r: int


def stack_z(obs: Observation) -> np.ndarray:
    """Stack the covariate vector z = (1, x, y) of a complete case.

    Raises
    ------
    MissingYError
        If the observation's y block is absent (r = 0).
    """
    if obs.r != 1 or obs.y is None:
        raise MissingYError("cannot stack z: y block is missing (r = 0)")
    return np.concatenate(([1.0], np.asarray(obs.x, float).ravel(),
                           np.asarray(obs.y, float).ravel()))


class CaptureDataset:
    """Array-backed capture-recapture dataset.

    Missing y values are NaN-coded; a row is a complete case iff every y
    entry is present.  After :func:`validate` the complete cases occupy
    indices ``0..m-1`` and the arrays are frozen.

    Attributes
    ----------
    d : (n,) int array of capture counts.
    x : (n, dim_x) float array, fully observed covariates.
    y : (n, dim_y) float array with NaN for missing entries.
    r : (n,) int array of non-missingness indicators.
    original_index : (n,) int array mapping rows back to the input order.
    """

    def __init__(self, d, x, y, r=None, x_names=None, y_names=None,
                 original_index=None, validated=False):
        d = np.asarray(d)
        self.d = d.astype(np.int64) if d.dtype.kind in "iu" else np.asarray(d, float)
        self.x = np.atleast_2d(np.asarray(x, float))
        if self.x.shape[0] != len(self.d) and self.x.size == 0:
            self.x = np.empty((len(self.d), 0))
        self.y = np.atleast_2d(np.asarray(y, float))
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if r is None:
            r = np.all(~np.isnan(self.y), axis=1).astype(np.int64)
        self.r = np.asarray(r, np.int64)
        self.x_names = list(x_names) if x_names is not None else [
            f"x{j + 1}" for j in range(self.x.shape[1])]
        self.y_names = list(y_names) if y_names is not None else [
            f"y{j + 1}" for j in range(self.y.shape[1])]
        self.original_index = (np.arange(len(self.d)) if original_index is None
                               else np.asarray(original_index, np.int64))
        self.validated = validated
        if validated:
            for arr in (self.d, self.x, self.y, self.r, self.original_index):
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.d)

    @property
    def m(self) -> int:
        return int(np.sum(self.r))

    @property
    def dim_x(self) -> int:
        return self.x.shape[1]

    @property
    def dim_y(self) -> int:
        return self.y.shape[1]

    @property
    def z_complete(self) -> np.ndarray:
        """(m, 1 + dim_x + dim_y) stacked covariates of the complete cases."""
        mask = self.r == 1
        m = int(mask.sum())
        return np.column_stack([np.ones(m), self.x[mask], self.y[mask]])

    def row(self, i: int) -> Observation:
        ri = int(self.r[i])
        yi = self.y[i].copy() if ri == 1 else None
        return Observation(d=int(self.d[i]), x=self.x[i].copy(), y=yi, r=ri)

    @property
    def observations(self) -> list[Observation]:
        return [self.row(i) for i in range(self.n)]

    @classmethod
    def from_observations(cls, observations, x_names=None, y_names=None):
        obs = list(observations)
        d = [o.d for o in obs]
        x = np.array([np.asarray(o.x, float).ravel() for o in obs])
        dim_y = max((np.size(o.y) for o in obs if o.y is not None), default=1)
        y = np.full((len(obs), dim_y), np.nan)
        for i, o in enumerate(obs):
            if o.y is not None:
                y[i] = np.asarray(o.y, float).ravel()
        r = [o.r for o in obs]
        return cls(d=np.asarray(d), x=x, y=y, r=np.asarray(r),
                   x_names=x_names, y_names=y_names)

    def __repr__(self):
        return (f"CaptureDataset(n={self.n}, m={self.m}, "
                f"dim_x={self.dim_x}, dim_y={self.dim_y}, "
                f"validated={self.validated})")


def validate(dataset: CaptureDataset, spec: CaptureModelSpec) -> CaptureDataset:
    """Check a dataset against the model spec and canonicalize its order.

    Returns a new dataset whose complete cases come first (stable order,
    original row indices retained).  Validation is idempotent: a validated
    dataset round-trips unchanged.

    Raises
    ------
    DatasetValidationError
        With one entry per violation (d = 0 rows, d > K rows, partial y
        rows, r/y disagreements, non-integral counts).
    InconsistentDimensionsError
        If covariate widths do not match the spec.
    EmptyCompleteCasesError
        If no row has the full y block observed.
    """
    if dataset.dim_x != spec.dim_x or dataset.dim_y != spec.dim_y:
        raise InconsistentDimensionsError([
            f"covariate layout ({dataset.dim_x}, {dataset.dim_y}) does not "
            f"match spec ({spec.dim_x}, {spec.dim_y})"])

    violations = []
    d = np.asarray(dataset.d, float)
    if np.any(d != np.floor(d)):
        for i in np.nonzero(d != np.floor(d))[0]:
            violations.append(f"row {dataset.original_index[i]}: capture count "
                              f"{d[i]} is not an integer")
    for i in np.nonzero(d < 1)[0]:
        violations.append(f"row {dataset.original_index[i]}: capture count "
                          f"{int(d[i])} < 1 (only captured individuals appear)")
    if spec.family == "binomial":
        K = spec.n_occasions
        for i in np.nonzero(d > K)[0]:
            violations.append(f"row {dataset.original_index[i]}: capture count "
                              f"{int(d[i])} exceeds K = {K}")
    if np.any(np.isnan(dataset.x)):
        for i in np.nonzero(np.any(np.isnan(dataset.x), axis=1))[0]:
            violations.append(f"row {dataset.original_index[i]}: missing value "
                              "in the fully observed x block")
    y_present = ~np.isnan(dataset.y)
    full = np.all(y_present, axis=1)
    empty = np.all(~y_present, axis=1)
    for i in np.nonzero(~(full | empty))[0]:
        violations.append(f"row {dataset.original_index[i]}: y block is "
                          "partially missing (y is missing as a unit)")
    for i in np.nonzero(full != (dataset.r == 1))[0]:
        if full[i] or empty[i]:
            violations.append(f"row {dataset.original_index[i]}: r = "
                              f"{int(dataset.r[i])} disagrees with y presence")
    if violations:
        raise DatasetValidationError(violations)
    if not np.any(full):
        raise EmptyCompleteCasesError()

    order = np.argsort(~full, kind="stable")  # complete cases first
    return CaptureDataset(
        d=np.asarray(dataset.d, np.int64)[order],
        x=dataset.x[order],
        y=dataset.y[order],
        r=full[order].astype(np.int64),
        x_names=dataset.x_names,
        y_names=dataset.y_names,
        original_index=dataset.original_index[order],
        validated=True,
    )


def _parse_cell(raw: str, row: int, col: str, kind: str):
    raw = raw.strip()
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise CSVFormatError(
                f"row {row}, column {col!r}: expected an integer, got {raw!r}"
            ) from None
    if raw == "":
        return np.nan
    try:
        return float(raw)
    except ValueError:
        raise CSVFormatError(
            f"row {row}, column {col!r}: expected a number, got {raw!r}"
        ) from None


def read_csv(path) -> CaptureDataset:
    """Read a capture-recapture CSV.

    Column contract: a header row; ``d`` (integer counts); ``x:<name>``
    columns (numeric, fully observed); ``y:<name>`` columns (numeric, an
    empty cell means missing); an optional ``r`` column that must agree
    with y-emptiness.  Row numbers in error messages are 1-based file
    lines (the header is line 1).
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except Exception as exc:
        raise CSVFormatError(f"cannot parse {path}: {exc}") from exc
    cols = list(frame.columns)
    if "d" not in cols:
        raise CSVFormatError("missing required column 'd'")
    x_cols = [c for c in cols if c.startswith("x:")]
    y_cols = [c for c in cols if c.startswith("y:")]
    if not y_cols:
        raise CSVFormatError("need at least one 'y:<name>' column")
    known = {"d", "r", *x_cols, *y_cols}
    unknown = [c for c in cols if c not in known]
    if unknown:
        raise CSVFormatError(f"unrecognized columns: {', '.join(unknown)}")

    n = len(frame)
    d = np.empty(n, np.int64)
    x = np.empty((n, len(x_cols)))
    y = np.empty((n, len(y_cols)))
    for i in range(n):
        line = i + 2
        d[i] = _parse_cell(frame["d"].iat[i], line, "d", "int")
        for j, c in enumerate(x_cols):
            x[i, j] = _parse_cell(frame[c].iat[i], line, c, "float")
        for j, c in enumerate(y_cols):
            y[i, j] = _parse_cell(frame[c].iat[i], line, c, "float")
    if "r" in cols:
        r = np.empty(n, np.int64)
        for i in range(n):
            val = _parse_cell(frame["r"].iat[i], i + 2, "r", "int")
            if val not in (0, 1):
                raise CSVFormatError(f"row {i + 2}, column 'r': must be 0 or 1")
            r[i] = val
    else:
        r = None
    return CaptureDataset(
        d=d, x=x, y=y, r=r,
        x_names=[c[2:] for c in x_cols],
        y_names=[c[2:] for c in y_cols],
    )
