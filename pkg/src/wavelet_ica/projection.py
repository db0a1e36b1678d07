"""Empirical scaling coefficients of a sample in [0, 1]^d and the wavelet contrast.

For a sample X_1..X_n, the joint coefficients are

    alpha[k] = 1/n sum_i prod_l phi_{j k_l}(X_i^l),   k in {0..2^j-1}^d,

the marginal coefficients are the one-dimensional analogues per coordinate,
and the contrast is ``sum_k (alpha[k] - prod_l marginal_l[k_l])**2``. It
vanishes when the projected density factorizes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .wavelets import PhiTable, periodized_terms

__all__ = [
    "CoefficientSet",
    "DEFAULT_CELL_BUDGET",
    "CellBudgetError",
    "check_sample",
    "read_sample_csv",
    "write_sample_csv",
    "project",
    "contrast",
    "contrast_of",
]

DEFAULT_CELL_BUDGET = 2 ** 27

# Observations x combinations accumulated per bincount call.
_CHUNK_TERMS = 1 << 22


class CellBudgetError(ValueError):
    """Raised when 2^(jd) translation cells exceed the configured budget."""


@dataclass(frozen=True)
class CoefficientSet:
    j: int
    d: int
    n: int
    joint: np.ndarray = field(repr=False)
    marginals: np.ndarray = field(repr=False)

    @property
    def joint_grid(self) -> np.ndarray:
        """Joint coefficients shaped ``(2**j,) * d``, indexed by k tuples."""
        return self.joint.reshape((1 << self.j,) * self.d)

    def product_of_marginals(self) -> np.ndarray:
        out = self.marginals[0]
        for m in self.marginals[1:]:
            out = np.multiply.outer(out, m)
        return out.reshape(-1)

    def to_csv(self, path: str | Path) -> None:
        width = 1 << self.j
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"k{l + 1}" for l in range(self.d)] + ["alpha"])
            for flat, value in enumerate(self.joint):
                writer.writerow(list(np.unravel_index(flat, (width,) * self.d)) + [repr(float(value))])


def check_sample(data) -> np.ndarray:
    """Validate an ``n x d`` sample with every entry in [0, 1]."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"sample must be a non-empty n x d matrix, got shape {X.shape}")
    bad = ~((X >= 0.0) & (X <= 1.0))
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        raise ValueError(f"sample row {row} has entries outside [0, 1]: {X[row].tolist()}")
    return X


def read_sample_csv(path: str | Path) -> np.ndarray:
    """Read one observation per row; a non-numeric first row is taken as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    data = np.array([[float(v) for v in r] for r in rows])
    if data.ndim != 2:
        raise ValueError(f"{path}: ragged rows")
    return data


def write_sample_csv(path: str | Path, data: np.ndarray) -> None:
    data = np.asarray(data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{l + 1}" for l in range(data.shape[1])])
        writer.writerows([repr(float(v)) for v in row] for row in data)


def project(sample, table: PhiTable, j: int, cell_budget: int = DEFAULT_CELL_BUDGET) -> CoefficientSet:
    """Empirical joint and marginal scaling coefficients at resolution ``j``.

    Each observation touches at most ``support_len**d`` wrapped cells.
    Accumulation order is fixed, so results are bit-reproducible.
    """
    X = check_sample(sample)
    if j < 0:
        raise ValueError(f"resolution j must be >= 0, got {j}")
    n, d = X.shape
    width = 1 << j
    cells_total = width ** d
    if cells_total > cell_budget:
        raise CellBudgetError(
            f"2^(j*d) = {cells_total} cells at j={j}, d={d} exceeds the budget of {cell_budget}"
        )

    cells, vals = periodized_terms(table, j, X)  # (n, d, S)
    S = cells.shape[-1]

    marginals = np.empty((d, width))
    for l in range(d):
        marginals[l] = np.bincount(cells[:, l].ravel(), weights=vals[:, l].ravel(),
                                   minlength=width) / n

    strides = width ** np.arange(d - 1, -1, -1, dtype=np.int64)
    offsets = cells * strides[None, :, None]
    joint = np.zeros(cells_total)
    combos = S ** d
    chunk = max(1, _CHUNK_TERMS // combos)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        # (observation, combination) products of the per-coordinate terms
        idx = np.zeros((stop - start, 1), dtype=np.int64)
        val = np.ones((stop - start, 1))
        for l in range(d):
            idx = (idx[:, :, None] + offsets[start:stop, l, None, :]).reshape(stop - start, -1)
            val = (val[:, :, None] * vals[start:stop, l, None, :]).reshape(stop - start, -1)
        joint += np.bincount(idx.ravel(), weights=val.ravel(), minlength=cells_total)
    joint /= n
    return CoefficientSet(j=j, d=d, n=n, joint=joint, marginals=marginals)


def contrast(coeffs: CoefficientSet) -> float:
    """Sum over all wrapped cells of ``(alpha_k - prod_l alpha_{k_l})**2``."""
    delta = coeffs.joint - coeffs.product_of_marginals()
    return float(np.dot(delta, delta))


def contrast_of(sample, table: PhiTable, j: int, cell_budget: int = DEFAULT_CELL_BUDGET) -> float:
    return contrast(project(sample, table, j, cell_budget=cell_budget))
