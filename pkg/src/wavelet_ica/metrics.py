"""Demixing error, independent oracles and Monte Carlo validation tools."""

from __future__ import annotations

import itertools
import math
from typing import NamedTuple, Sequence

import numpy as np

from .projection import check_sample, contrast_of
from .sources import DensityKind, parse_density, sample_sources, substream
from .preprocessing import to_cube
from .wavelets import PhiTable, periodized_terms

__all__ = [
    "AmariScale",
    "amari_scale",
    "amari_error",
    "haar_contrast_oracle",
    "UVPair",
    "kernel_factors",
    "u_v_statistics",
    "RiskRow",
    "risk_curve",
    "fit_loglog",
    "replicate_seed",
    "select_resolution",
]


class AmariScale(NamedTuple):
    raw: float
    scaled: float


def amari_scale(P) -> AmariScale:
    """Amari index of ``P``: 0 iff ``P`` is a scaled permutation, at most 1.

    ``raw = [sum_i (sum_j |p_ij| / max_j |p_ij| - 1)
             + sum_j (sum_i |p_ij| / max_i |p_ij| - 1)] / (2 d (d - 1))``.
    """
    P = np.abs(np.asarray(P, dtype=float))
    d = P.shape[0]
    if P.shape != (d, d) or d < 2:
        raise ValueError(f"expected a square matrix of size >= 2, got shape {P.shape}")
    if np.any(P.max(axis=1) == 0) or np.any(P.max(axis=0) == 0):
        raise np.linalg.LinAlgError("matrix has a zero row or column")
    rows = (P.sum(axis=1) / P.max(axis=1) - 1).sum()
    cols = (P.sum(axis=0) / P.max(axis=0) - 1).sum()
    raw = float((rows + cols) / (2 * d * (d - 1)))
    return AmariScale(raw, 100.0 * raw)


def amari_error(A_true, W_est, N_whiten=None) -> float:
    """Amari distance on the 0-100 scale between the mixing ``A_true`` and the
    full demixing ``W_est @ N_whiten``."""
    A = np.asarray(A_true, dtype=float)
    W = np.asarray(W_est, dtype=float)
    N = np.eye(A.shape[0]) if N_whiten is None else np.asarray(N_whiten, dtype=float)
    for name, M in (("A_true", A), ("W_est", W), ("N_whiten", N)):
        if np.linalg.cond(M) > 1e14:
            raise np.linalg.LinAlgError(f"{name} is singular")
    return amari_scale(W @ N @ A).scaled


def haar_contrast_oracle(sample, j: int) -> float:
    """Haar contrast computed from plain histograms on the 2^j grid.

    ``2^(jd) * sum_k (p_k - prod_l p^l_{k_l})**2`` with joint and marginal
    cell frequencies; the point x = 1 falls in the last cell.
    """
    X = check_sample(sample)
    n, d = X.shape
    width = 1 << j
    bins = np.minimum(np.floor(X * width).astype(np.int64), width - 1)
    joint = np.zeros((width,) * d)
    np.add.at(joint, tuple(bins.T), 1.0)
    joint /= n
    prod = np.ones((width,) * d)
    for l in range(d):
        marg = np.bincount(bins[:, l], minlength=width) / n
        shape = [1] * d
        shape[l] = width
        prod = prod * marg.reshape(shape)
    return float(width ** d * np.sum((joint - prod) ** 2))


class UVPair(NamedTuple):
    m: int
    u_stat: float
    v_stat: float


def kernel_factors(sample, table: PhiTable, j: int, k: Sequence[int], rho: int,
                   ells: Sequence[int]) -> list[np.ndarray]:
    """Per-observation values of each slot of the product kernel.

    The first ``rho`` slots hold the tensor function ``Phi_jk(x)``; slot
    ``rho + t`` holds the marginal ``phi_{j k[ells[t]]}(x[ells[t]])``.
    """
    X = check_sample(sample)
    n, d = X.shape
    k = tuple(int(v) for v in k)
    if len(k) != d:
        raise ValueError(f"translation tuple has {len(k)} entries for d={d}")
    cells, vals = periodized_terms(table, j, X)
    coord = np.where(cells == np.asarray(k)[None, :, None], vals, 0.0).sum(axis=-1)  # (n, d)
    tensor = coord.prod(axis=1)
    out = [tensor] * rho
    for ell in ells:
        if not 0 <= ell < d:
            raise ValueError(f"coordinate {ell} outside 0..{d - 1}")
        out.append(coord[:, ell])
    return out


def _distinct_sum(f: list[np.ndarray]) -> float:
    """Sum of prod_t f[t][i_t] over pairwise distinct indices (m <= 3)."""
    if len(f) == 1:
        return float(f[0].sum())
    if len(f) == 2:
        a, b = f
        return float(a.sum() * b.sum() - (a * b).sum())
    a, b, c = f
    return float(a.sum() * b.sum() * c.sum()
                 - (a * b).sum() * c.sum() - (a * c).sum() * b.sum() - (b * c).sum() * a.sum()
                 + 2 * (a * b * c).sum())


def u_v_statistics(sample, table: PhiTable, j: int, k: Sequence[int], rho: int, sigma: int,
                   ells: Sequence[int] | None = None, *, enumerate_all: bool = False,
                   budget: int = 2_000_000) -> UVPair:
    """U- and V-statistics of the product kernel with ``rho`` tensor slots and
    ``sigma`` marginal slots (coordinates ``ells``, default ``0, 1, ...``).

    ``enumerate_all`` walks every index tuple explicitly instead of using the
    inclusion-exclusion identities; it is refused above ``budget`` tuples.
    """
    X = check_sample(sample)
    n, d = X.shape
    m = rho + sigma
    if rho < 0 or sigma < 0 or m < 1:
        raise ValueError(f"need rho, sigma >= 0 and rho + sigma >= 1, got {rho}, {sigma}")
    if m > 3:
        raise ValueError(f"kernel arity m={m} too large; at most 3 is supported")
    if n < m:
        raise ValueError(f"need n >= m, got n={n}, m={m}")
    ells = list(range(sigma)) if ells is None else list(ells)
    if len(ells) != sigma:
        raise ValueError(f"{len(ells)} coordinates given for sigma={sigma}")
    f = kernel_factors(X, table, j, k, rho, ells)
    n_distinct = math.perm(n, m)

    if enumerate_all:
        if n ** m > budget:
            raise ValueError(f"{n}^{m} index tuples exceed the enumeration budget {budget}")
        v_sum = u_sum = 0.0
        for idx in itertools.product(range(n), repeat=m):
            term = 1.0
            for t, i in enumerate(idx):
                term *= f[t][i]
            v_sum += term
            if len(set(idx)) == m:
                u_sum += term
        return UVPair(m, u_sum / n_distinct, v_sum / n ** m)

    v = float(np.prod([fi.mean() for fi in f]))
    u = _distinct_sum(f) / n_distinct
    return UVPair(m, u, v)


class RiskRow(NamedTuple):
    j: int
    mean: float
    bias: float
    variance: float


def risk_curve(density, d: int, j_set: Sequence[int], n: int, replicates: int, seed: int,
               table: PhiTable) -> list[RiskRow]:
    """Monte Carlo mean, bias and variance of the estimated contrast per resolution.

    Sources are independent and unmixed. Non-uniform samples are relocated
    into the unit cube per coordinate, which keeps them independent.
    """
    kind = parse_density(density) if isinstance(density, str) else density
    if not isinstance(kind, DensityKind):
        raise TypeError("density must be a name or a DensityKind")
    if replicates < 2:
        raise ValueError("need at least two replicates for a variance")
    values = np.empty((len(j_set), replicates))
    for r in range(replicates):
        S = sample_sources(kind, d, n, seed=replicate_seed(seed, r))
        if kind.name != "uniform":
            S = to_cube(S) if n > 1 else np.full_like(S, 0.5)
        for a, j in enumerate(j_set):
            values[a, r] = contrast_of(S, table, j)
    # independent columns: the density factorizes and the population contrast is 0
    truth = 0.0
    rows = []
    for a, j in enumerate(j_set):
        mean = float(values[a].mean())
        rows.append(RiskRow(j, mean, mean - truth, float(values[a].var(ddof=1))))
    return rows


def replicate_seed(seed: int, r: int) -> int:
    """Seed of replicate ``r``; it does not depend on how many replicates run."""
    return int(substream(seed, "replicate", r).integers(2 ** 63))


def fit_loglog(x, y) -> tuple[float, float]:
    """Least-squares slope of ``y`` against ``x`` and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        coef = np.polyfit(x, y, 1)
        return float(coef[0]), float("nan")
    coef, cov = np.polyfit(x, y, 1, cov=True)
    return float(coef[0]), float(np.sqrt(cov[0, 0]))


def select_resolution(n: int, d: int, s: float, p: float = 2.0) -> int:
    """Resolution balancing bias 2^(-4js) against variance 2^(jd)/n.

    ``2^j ~ n^(1/(4s' + d))`` where ``s' = s + d/2 - d/p`` for ``1 <= p <= 2``
    and ``s' = s`` otherwise. Infinite smoothness gives j = 0.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not (s > 0):
        raise ValueError(f"smoothness s must be > 0 or inf, got {s}")
    if not (p >= 1):
        raise ValueError(f"p must be >= 1, got {p}")
    if math.isinf(s):
        return 0
    s_eff = s + d / 2 - d / p if p <= 2 else s
    if s_eff <= 0:
        raise ValueError(f"effective smoothness {s_eff} is not positive")
    return max(0, math.floor(math.log2(n) / (4 * s_eff + d) + 0.5))
