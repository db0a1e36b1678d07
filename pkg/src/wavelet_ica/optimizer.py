"""Steepest descent of the wavelet contrast over rotations.

Starting from W = I, each iteration takes a finite-difference gradient of
the contrast in R^{d x d}, projects it onto the Lie algebra so(d), line
searches along the one-parameter subgroup ``exp(-eta * skew)`` and moves to
``W' = exp(-eta * skew) W``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .preprocessing import apply_cube, fit_rotation_cube, to_cube
from .projection import DEFAULT_CELL_BUDGET, contrast_of
from .wavelets import PhiTable

__all__ = [
    "DemixState",
    "OptimizerConfig",
    "MinimizeResult",
    "make_objective",
    "fd_gradient",
    "skew_project",
    "exp_skew",
    "polar",
    "minimize",
    "angle_sweep",
]

Objective = Callable[[np.ndarray], float]

_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class DemixState:
    W: np.ndarray
    contrast: float
    grad: np.ndarray | None = None
    skew: np.ndarray | None = None
    iteration: int = 0


@dataclass(frozen=True)
class OptimizerConfig:
    fd_step: float = 1e-2
    max_iterations: int = 20
    contrast_tol: float = 1e-5
    grad_tol: float = 1e-6
    min_improvement: float = 1e-12
    eta0: float = 1e-2
    bracket_growth: float = 2.0
    max_bracket: int = 40
    golden_shrinks: int = 20
    two_sided: bool = True

    def __post_init__(self):
        for name in ("fd_step", "contrast_tol", "grad_tol", "min_improvement", "eta0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.bracket_growth <= 1:
            raise ValueError("bracket_growth must exceed 1")
        if self.max_iterations < 0 or self.max_bracket < 1 or self.golden_shrinks < 0:
            raise ValueError("iteration budgets must be non-negative")


@dataclass
class MinimizeResult:
    trace: list[DemixState] = field(default_factory=list)
    status: str = ""
    evaluations: int = 0

    @property
    def final(self) -> DemixState:
        return self.trace[-1]

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration


def make_objective(Y, table: PhiTable, j: int, rescale: str = "once", margin: float = 0.0,
                   cell_budget: int = DEFAULT_CELL_BUDGET) -> Objective:
    """Contrast of the demixed sample ``Y W^T`` as a function of ``W``.

    ``rescale="once"`` fits one isotropic cube map to ``Y`` (see
    :func:`fit_rotation_cube`) and reuses it for every ``W``;
    ``rescale="per-step"`` re-fits a min-max map to each ``Y W^T``.
    """
    Y = np.asarray(Y, dtype=float)
    if rescale == "per-step":
        def objective(W):
            return contrast_of(to_cube(Y @ np.asarray(W).T, margin), table, j, cell_budget)
    elif rescale == "once":
        # centre Y first so that rotations keep the data around the cube centre
        centre = Y.mean(axis=0)
        Yc = Y - centre
        cube = fit_rotation_cube(Yc, margin)

        def objective(W):
            return contrast_of(apply_cube(cube, Yc @ np.asarray(W).T), table, j, cell_budget)
    else:
        raise ValueError(f"rescale must be 'once' or 'per-step', got {rescale!r}")
    return objective


def fd_gradient(objective: Objective, W, eps: float, f0: float | None = None) -> np.ndarray:
    """Forward differences ``[J(W + eps E_ab) - J(W)] / eps`` for every entry.

    The perturbed matrices are not projected back onto SO(d).
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    W = np.asarray(W, dtype=float)
    base = objective(W) if f0 is None else f0
    G = np.empty_like(W)
    for a in range(W.shape[0]):
        for b in range(W.shape[1]):
            Wp = W.copy()
            Wp[a, b] += eps
            G[a, b] = (objective(Wp) - base) / eps
    return G


def skew_project(grad, W) -> np.ndarray:
    """Gradient in so(d): ``grad W^T - W grad^T``."""
    grad = np.asarray(grad, dtype=float)
    W = np.asarray(W, dtype=float)
    M = grad @ W.T
    return M - M.T


_PADE_ORDER = 6
_PADE = [math.factorial(2 * _PADE_ORDER - k) * math.factorial(_PADE_ORDER)
         / (math.factorial(2 * _PADE_ORDER) * math.factorial(k) * math.factorial(_PADE_ORDER - k))
         for k in range(_PADE_ORDER + 1)]


def exp_skew(B) -> np.ndarray:
    """Matrix exponential of an antisymmetric ``B`` by scaling and squaring.

    Uses the diagonal [6/6] Pade approximant, which maps so(d) into SO(d)
    exactly in exact arithmetic.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {B.shape}")
    if np.linalg.norm(B + B.T) > 1e-10:
        raise ValueError("matrix is not antisymmetric")
    d = B.shape[0]
    norm = np.linalg.norm(B, 1)
    squarings = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    X = B / 2.0 ** squarings
    P = np.zeros((d, d))
    Q = np.zeros((d, d))
    power = np.eye(d)
    for k, c in enumerate(_PADE):
        P += c * power
        Q += (-1) ** k * c * power
        power = power @ X
    R = np.linalg.solve(Q, P)
    for _ in range(squarings):
        R = R @ R
    return R


def polar(W) -> np.ndarray:
    """Nearest orthogonal matrix (orthogonal polar factor)."""
    U, _, Vt = np.linalg.svd(W)
    return U @ Vt


def _line_search(phi: Callable[[float], float], f0: float, cfg: OptimizerConfig):
    """Minimise ``phi(eta)`` over eta >= 0 without derivatives.

    Doubling bracket from ``eta0`` until the value climbs back to ``f0``,
    then golden-section refinement around the best doubling step. Returns
    the best ``(eta, value)`` seen and the number of evaluations.
    """
    seen = {0.0: f0}

    def f(eta):
        if eta not in seen:
            seen[eta] = phi(eta)
        return seen[eta]

    eta = cfg.eta0
    if f(eta) >= f0:
        # nothing gained at eta0: look closer to the origin
        for _ in range(cfg.golden_shrinks):
            eta /= cfg.bracket_growth
            if f(eta) < f0:
                break
        else:
            return 0.0, f0, len(seen) - 1
        lo, hi = 0.0, eta * cfg.bracket_growth
    else:
        # keep doubling while still below the start: small bumps in the
        # contrast would otherwise end the bracket long before the minimum
        steps = [eta]
        for _ in range(cfg.max_bracket):
            nxt = steps[-1] * cfg.bracket_growth
            steps.append(nxt)
            if f(nxt) >= f0:
                break
        best = min(steps, key=f)
        lo, hi = best / cfg.bracket_growth, best * cfg.bracket_growth
        if best == steps[0]:
            lo = 0.0

    a, b = lo + (1 - _GOLDEN) * (hi - lo), lo + _GOLDEN * (hi - lo)
    for _ in range(cfg.golden_shrinks):
        if f(a) <= f(b):
            hi, b = b, a
            a = lo + (1 - _GOLDEN) * (hi - lo)
        else:
            lo, a = a, b
            b = lo + _GOLDEN * (hi - lo)
    best = min(seen, key=lambda e: (seen[e], e))
    return best, seen[best], len(seen) - 1


def _search_along(J, W, direction, f0, cfg):
    eta, value, _ = _line_search(lambda e: J(exp_skew(e * direction) @ W), f0, cfg)
    return eta, value


def minimize(Y, table: PhiTable, j: int, config: OptimizerConfig | None = None, *,
             objective: Objective | None = None, W0=None, rescale: str = "once",
             margin: float = 0.0, callback: Callable[[DemixState], None] | None = None) -> MinimizeResult:
    """Minimise the contrast of ``Y W^T`` over W in SO(d), starting at ``W0`` (default I).

    Stops on entry if the contrast or the Euclidean gradient is below its
    tolerance; otherwise iterates until ``max_iterations``, until an
    iteration improves by no more than ``min_improvement``, or until the line
    search finds no descent (status ``"stalled"``). With ``two_sided`` the
    opposite direction of the same geodesic is searched before giving up.
    """
    cfg = config or OptimizerConfig()
    Y = np.asarray(Y, dtype=float)
    d = Y.shape[1]
    if objective is None:
        objective = make_objective(Y, table, j, rescale=rescale, margin=margin)
        if cfg.fd_step < 2.0 ** (j - table.precision):
            warnings.warn(
                f"fd_step={cfg.fd_step:g} is below 2^(j-L)={2.0 ** (j - table.precision):g}; "
                "finite differences may not move points across dyadic steps",
                RuntimeWarning, stacklevel=2)

    result = MinimizeResult()
    counter = [0]

    def J(W):
        counter[0] += 1
        return objective(W)

    W = np.eye(d) if W0 is None else polar(np.asarray(W0, dtype=float))
    if np.linalg.det(W) < 0:
        raise ValueError("starting matrix must be a rotation (det +1)")
    value = J(W)
    iteration = 0
    while True:
        if value < cfg.contrast_tol and iteration == 0:
            result.trace.append(DemixState(W, value, iteration=iteration))
            result.status = "converged-on-entry"
            break
        if iteration >= cfg.max_iterations:
            result.trace.append(DemixState(W, value, iteration=iteration))
            result.status = "max-iterations"
            break
        grad = fd_gradient(J, W, cfg.fd_step, f0=value)
        skew = skew_project(grad, W)
        state = DemixState(W, value, grad, skew, iteration)
        result.trace.append(state)
        if callback:
            callback(state)
        if np.linalg.norm(grad) < cfg.grad_tol:
            result.status = "converged-on-entry" if iteration == 0 else "small-gradient"
            break

        direction = -skew
        eta, new_value = _search_along(J, W, direction, value, cfg)
        if eta == 0.0 and cfg.two_sided:
            # near a maximum the FD gradient is mostly noise and may point uphill
            direction = skew
            eta, new_value = _search_along(J, W, direction, value, cfg)
        if eta == 0.0 or not new_value <= value:
            result.status = "stalled"
            break
        W_new = exp_skew(eta * direction) @ W
        if np.linalg.norm(W_new.T @ W_new - np.eye(d)) > 1e-12:
            W_new = polar(W_new)
            new_value = J(W_new)
            if new_value > value:
                result.status = "stalled"
                break
        improvement = value - new_value
        W, value = W_new, new_value
        iteration += 1
        if improvement <= cfg.min_improvement:
            result.trace.append(DemixState(W, value, iteration=iteration))
            result.status = "no-improvement"
            break

    result.evaluations = counter[0]
    return result


def angle_sweep(objective: Objective, angles) -> np.ndarray:
    """Contrast of planar rotations ``W(theta)`` for d = 2."""
    out = np.empty(len(angles))
    for i, theta in enumerate(angles):
        c, s = math.cos(theta), math.sin(theta)
        out[i] = objective(np.array([[c, -s], [s, c]]))
    return out
