"""Daubechies scaling functions tabulated at dyadic rationals.

The scaling function of a compactly supported Daubechies wavelet D2N has no
closed form; its values are exact at dyadic rationals, where they follow from
the values at the integers by the refinement relation

    phi(x) = sqrt(2) * sum_k h_k phi(2x - k).

The values at the integers form the unit-eigenvalue eigenvector of the
refinement matrix. Everything downstream reads phi from a precomputed
``PhiTable`` and never evaluates it any other way.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "WaveletSpec",
    "PhiTable",
    "make_filter",
    "build_phi_table",
    "eval_phi_periodized",
    "periodized_terms",
    "SUPPORTED_GENERA",
]

SQRT2 = np.sqrt(2.0)

# Extremal-phase low-pass filters, normalised so that sum(h) = sqrt(2).
_FILTERS = {
    1: (0.70710678118654752440, 0.70710678118654752440),
    2: (
        0.48296291314453414337,
        0.83651630373780790558,
        0.22414386804201338103,
        -0.12940952255126038117,
    ),
    3: (
        0.33267055295008261600,
        0.80689150931109257649,
        0.45987750211849157010,
        -0.13501102001025458870,
        -0.085441273882026661693,
        0.035226291885709536603,
    ),
    4: (
        0.23037781330889650086,
        0.71484657055291564709,
        0.63088076792985890788,
        -0.027983769416859854211,
        -0.18703481171909308408,
        0.030841381835560763627,
        0.032883011666885199735,
        -0.010597401785069032105,
    ),
}

SUPPORTED_GENERA = tuple(sorted(_FILTERS))


@dataclass(frozen=True)
class WaveletSpec:
    """Daubechies family member D2N with its low-pass filter."""

    genus: int
    filter: tuple[float, ...]

    @property
    def support_len(self) -> int:
        return 2 * self.genus - 1

    @property
    def name(self) -> str:
        return f"D{2 * self.genus}"

    @property
    def h(self) -> np.ndarray:
        return np.asarray(self.filter, dtype=float)

    @classmethod
    def from_name(cls, name: str) -> "WaveletSpec":
        """Parse ``"D4"``-style names (case-insensitive; ``"haar"`` is D2)."""
        key = name.strip().upper()
        if key == "HAAR":
            return make_filter(1)
        if not key.startswith("D") or not key[1:].isdigit() or int(key[1:]) % 2:
            raise ValueError(f"unknown wavelet {name!r}; expected one of "
                             + ", ".join(f"D{2 * g}" for g in SUPPORTED_GENERA))
        return make_filter(int(key[1:]) // 2)


def make_filter(genus: int) -> WaveletSpec:
    """Return the D2N filter for ``genus`` N.

    Raises
    ------
    ValueError
        If N is not one of the supported family members (D2, D4, D6, D8).
    """
    if genus not in _FILTERS:
        raise ValueError(
            f"unsupported Daubechies genus {genus!r}; supported families are "
            + ", ".join(f"D{2 * g} (genus {g})" for g in SUPPORTED_GENERA)
        )
    return WaveletSpec(genus=genus, filter=_FILTERS[genus])


@dataclass(frozen=True)
class PhiTable:
    """Values of phi at ``i * 2**-precision`` for ``i = 0 .. support_len * 2**precision``.

    The array is read-only; a table can be shared freely between threads.
    """

    spec: WaveletSpec
    precision: int
    values: np.ndarray = field(repr=False)

    @property
    def step(self) -> float:
        return 2.0 ** -self.precision

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.values.size) * self.step

    def __call__(self, x):
        """Look up phi(x) at the dyadic of step ``2**-precision`` at or below x.

        Points outside the support give 0.
        """
        x = np.asarray(x, dtype=float)
        idx = np.floor(x * 2.0 ** self.precision)
        inside = (idx >= 0) & (idx < self.values.size)
        out = np.zeros(x.shape)
        out[inside] = self.values[idx[inside].astype(np.int64)]
        return out if out.ndim else float(out)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "phi"])
            for x, v in zip(self.grid, self.values):
                writer.writerow([repr(float(x)), repr(float(v))])


def _integer_values(h: np.ndarray, max_iter: int = 200, tol: float = 1e-14) -> np.ndarray:
    """phi(1), ..., phi(2N-2) by inverse iteration on the refinement matrix."""
    size = h.size - 2
    idx = np.arange(1, size + 1)
    lag = 2 * idx[:, None] - idx[None, :]
    valid = (lag >= 0) & (lag < h.size)
    M = np.where(valid, SQRT2 * h[np.clip(lag, 0, h.size - 1)], 0.0)

    eig = np.linalg.eigvals(M)
    if np.count_nonzero(np.abs(eig - 1.0) < 1e-6) != 1:
        raise ArithmeticError("refinement matrix has no simple unit eigenvalue")

    shifted = M - (1.0 + 1e-9) * np.eye(size)
    v = np.ones(size) / np.sqrt(size)
    for _ in range(max_iter):
        v = np.linalg.solve(shifted, v)
        v /= np.linalg.norm(v)
        if np.linalg.norm(M @ v - v) <= tol:
            break
    else:
        if np.linalg.norm(M @ v - v) > 1e3 * tol:
            raise ArithmeticError("inverse iteration did not converge")
    total = v.sum()
    if abs(total) < 1e-8:
        raise ArithmeticError("cannot normalise integer values: sum is zero")
    return v / total


def build_phi_table(spec: WaveletSpec, precision: int) -> PhiTable:
    """Tabulate phi on the dyadic grid of step ``2**-precision``.

    Parameters
    ----------
    spec : WaveletSpec
    precision : int
        Dyadic octave L >= 1; about ``0.3 * L`` exact decimals.
    """
    if int(precision) != precision or precision < 1:
        raise ValueError(f"precision must be an integer >= 1, got {precision!r}")
    L = int(precision)
    h = spec.h
    scale = 1 << L
    values = np.zeros(spec.support_len * scale + 1)

    if spec.genus == 1:
        values[:scale] = 1.0
    else:
        values[scale:spec.support_len * scale:scale] = _integer_values(h)
        last = values.size - 1
        for level in range(1, L + 1):
            stride = 1 << (L - level)
            pos = np.arange(stride, last, 2 * stride)
            acc = np.zeros(pos.size)
            for k, hk in enumerate(h):
                src = 2 * pos - k * scale
                ok = (src >= 0) & (src <= last)
                acc[ok] += hk * values[src[ok]]
            values[pos] = SQRT2 * acc

    values.flags.writeable = False
    return PhiTable(spec=spec, precision=L, values=values)


def periodized_terms(table: PhiTable, j: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero terms of the periodized phi_{jk} at each point of ``x``.

    Returns ``(cells, vals)``, both of shape ``x.shape + (support_len,)``:
    term ``s`` is the value ``2**(j/2) * phi(2**j x - c + s)`` contributed to
    translation ``cells[..., s] = (c - s) mod 2**j`` where ``c = floor(2**j x)``.
    Cells may repeat when ``2**j < support_len``; their terms then add up.

    Positions are floored onto the dyadic grid of step ``2**-(j + L)``; x = 1
    lands on the last grid point below 1, hence in the last cell.
    """
    x = np.asarray(x, dtype=float)
    L = table.precision
    width = 1 << j
    top = (width << L) - 1
    pos = np.floor(x * float(width << L)).astype(np.int64)
    np.clip(pos, 0, top, out=pos)
    base = pos >> L
    frac = pos & ((1 << L) - 1)
    shifts = np.arange(table.spec.support_len, dtype=np.int64)
    cells = (base[..., None] - shifts) & (width - 1)  # mod 2^j, also for negatives
    vals = table.values[frac[..., None] + (shifts << L)] * 2.0 ** (j / 2)
    return cells, vals


def eval_phi_periodized(table: PhiTable, j: int, k: int, x):
    """Periodized ``phi_{jk}(x) = 2**(j/2) sum_m phi(2**j x - k + m 2**j)`` on [0, 1].

    Any ``j >= 0`` is accepted; below ``2**j > support_len`` the support wraps
    onto itself and several terms of the m-sum overlap.
    """
    if j < 0:
        raise ValueError(f"resolution j must be >= 0, got {j}")
    if not 0 <= k < (1 << j):
        raise ValueError(f"translation k={k} outside 0..{(1 << j) - 1}")
    scalar = np.ndim(x) == 0
    cells, vals = periodized_terms(table, j, np.atleast_1d(x))
    out = np.where(cells == k, vals, 0.0).sum(axis=-1)
    return float(out[0]) if scalar else out
