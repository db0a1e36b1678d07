"""Centering, whitening and affine relocation into the unit hypercube."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WhitenResult",
    "CubeMap",
    "jacobi_eigh",
    "whiten",
    "fit_cube",
    "fit_rotation_cube",
    "apply_cube",
    "to_cube",
]


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, U)`` with ``A = U diag(eigenvalues) U^T``,
    eigenvalues in ascending order. Sweeps stop once the off-diagonal
    Frobenius norm drops below ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix is not symmetric")
    A = (A + A.T) / 2
    d = A.shape[0]
    U = np.eye(d)
    scale = np.linalg.norm(A) or 1.0
    for _ in range(max_sweeps):
        if np.linalg.norm(A - np.diag(np.diag(A))) <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta ** 2 + 1)) if theta else 1.0
                c = 1 / np.sqrt(t ** 2 + 1)
                s = t * c
                G = np.eye(d)
                G[p, p] = G[q, q] = c
                G[p, q], G[q, p] = s, -s
                A = G.T @ A @ G
                U = U @ G
    else:
        raise ArithmeticError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], U[:, order]


@dataclass(frozen=True)
class WhitenResult:
    whitened: np.ndarray
    mean: np.ndarray
    whitener: np.ndarray
    eigenvalues: np.ndarray

    def transform(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.mean) @ self.whitener.T


def whiten(raw, symmetric: bool = False) -> WhitenResult:
    """Center ``raw`` (n x d) and map it to identity sample covariance.

    The whitener is ``N = Lambda^{-1/2} U^T`` from ``cov = U Lambda U^T``, so
    ``N cov N^T = I``. Covariance uses the 1/(n-1) normalisation.

    With ``symmetric=True`` the whitener is ``U Lambda^{-1/2} U^T`` instead,
    the one closest to a pure rescaling; near-isotropic independent data then
    stays (nearly) independent, whereas the default adds an arbitrary rotation.
    """
    X = np.asarray(raw, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected an n x d matrix, got shape {X.shape}")
    n, d = X.shape
    if n <= d:
        raise ValueError(f"whitening needs more observations than dimensions (n={n}, d={d})")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    w, U = jacobi_eigh(cov)
    if not np.all(np.isfinite(w)) or w[0] <= 1e-12 * max(w[-1], 0.0) or w[-1] <= 0:
        raise np.linalg.LinAlgError(f"sample covariance is singular (eigenvalues {w})")
    N = (U / np.sqrt(w)).T
    if symmetric:
        N = U @ N
    return WhitenResult(whitened=centered @ N.T, mean=mean, whitener=N, eigenvalues=w)


@dataclass(frozen=True)
class CubeMap:
    """Per-coordinate map ``x -> margin + (1 - 2 margin) (x + offset) / span``.

    ``-offset`` is the point sent to ``margin`` and ``span`` the length sent
    onto ``[margin, 1 - margin]``. Dividing by the span (rather than
    multiplying by its inverse) sends a min-max fit's extremes exactly to the
    cube faces.
    """

    offset: np.ndarray
    span: np.ndarray
    margin: float = 0.0

    @property
    def scale(self) -> np.ndarray:
        return (1.0 - 2 * self.margin) / self.span


def _check_margin(margin: float) -> None:
    if not 0.0 <= margin < 0.5:
        raise ValueError(f"margin must lie in [0, 0.5), got {margin}")


def fit_cube(data, margin: float = 0.0) -> CubeMap:
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    _check_margin(margin)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    if np.any(~(span > 0)):
        bad = np.flatnonzero(~(span > 0)).tolist()
        raise ValueError(f"constant coordinate(s) {bad} cannot be rescaled")
    return CubeMap(offset=-lo, span=span, margin=margin)


def fit_rotation_cube(data, margin: float = 0.0, slack: float = 1.05) -> CubeMap:
    """Isotropic map sending the ball around the data mean that holds every
    observation (radius times ``slack``) into the cube.

    Unlike :func:`fit_cube`, the same map stays valid after any rotation of
    the centred data, so it can be fitted once before a search over rotations.
    """
    X = np.asarray(data, dtype=float)
    _check_margin(margin)
    centre = X.mean(axis=0)
    radius = slack * np.sqrt(np.max(np.sum((X - centre) ** 2, axis=1)))
    if not radius > 0:
        raise ValueError("all observations coincide; cannot rescale")
    return CubeMap(offset=radius - centre, span=np.full(X.shape[1], 2 * radius), margin=margin)


def apply_cube(cube: CubeMap, data) -> np.ndarray:
    """Apply ``cube``; round-off spill past [0, 1] is clamped back to the boundary."""
    X = np.asarray(data, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    out = (X + cube.offset) / cube.span
    if cube.margin:
        out = cube.margin + (1.0 - 2 * cube.margin) * out
    np.clip(out, 0.0, 1.0, out=out)
    return out[:, 0] if squeeze else out


def to_cube(data, margin: float = 0.0) -> np.ndarray:
    return apply_cube(fit_cube(data, margin), data)
