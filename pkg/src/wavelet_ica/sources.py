"""Seeded latent sources, mixing matrices and the mixing model X = A S.

Every random draw goes through :func:`substream`, which derives an
independent ``numpy.random.Generator`` from ``(seed, name, index...)``.
There is no module-level generator.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DENSITIES",
    "DensityKind",
    "MixingSpec",
    "substream",
    "parse_density",
    "parse_mixing",
    "sample_sources",
    "make_mixing",
    "rotation",
    "random_rotation",
    "mix",
]


def substream(seed: int, *key) -> np.random.Generator:
    """Generator for the named substream ``key`` of ``seed``.

    ``key`` items are strings (hashed with CRC32) or non-negative ints.
    Distinct keys give statistically independent streams, stable across
    platforms and numpy versions that keep PCG64 and SeedSequence.
    """
    words = [zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in key]
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(words))
    return np.random.Generator(np.random.PCG64(ss))


# name -> default parameters
DENSITIES = {
    "uniform": {},
    "exponential": {"rate": 1.0},
    "student": {"df": 3.0},
    "semicircular": {"radius": 1.0},
    "pareto": {"shape": 3.0},
    "triangular": {"left": 0.0, "mode": 0.5, "right": 1.0},
    "normal": {},
    "cauchy": {},
}

_ALIASES = {"semicirc": "semicircular", "semi-circ": "semicircular", "t": "student",
            "gaussian": "normal", "exp": "exponential"}


@dataclass(frozen=True)
class DensityKind:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in DENSITIES:
            raise ValueError(f"unknown density {self.name!r}; choose from {sorted(DENSITIES)}")
        unknown = set(self.params) - set(DENSITIES[self.name])
        if unknown:
            raise ValueError(f"{self.name}: unknown parameter(s) {sorted(unknown)}")
        p = self.resolved()
        for key in ("rate", "df", "radius", "shape"):
            if key in p and not p[key] > 0:
                raise ValueError(f"{self.name}: {key} must be > 0, got {p[key]}")
        if self.name == "triangular" and not (p["left"] <= p["mode"] <= p["right"] and p["left"] < p["right"]):
            raise ValueError(f"triangular: need left <= mode <= right, got {p}")

    def resolved(self) -> dict:
        return {**DENSITIES[self.name], **self.params}

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = self.resolved()
        if self.name == "uniform":
            return rng.random(n)
        if self.name == "exponential":
            return rng.exponential(1.0 / p["rate"], n)
        if self.name == "student":
            return rng.standard_t(p["df"], n)
        if self.name == "semicircular":
            # x-coordinate of a point uniform on the disc of that radius
            return p["radius"] * (2.0 * rng.beta(1.5, 1.5, n) - 1.0)
        if self.name == "pareto":
            # classical Pareto with unit scale: support [1, inf)
            return 1.0 + rng.pareto(p["shape"], n)
        if self.name == "triangular":
            return rng.triangular(p["left"], p["mode"], p["right"], n)
        if self.name == "normal":
            return rng.standard_normal(n)
        return rng.standard_cauchy(n)


def parse_density(text: str, params: str | None = None) -> DensityKind:
    """``"student"`` plus optional ``"df=5"``-style comma-separated parameters."""
    name = _ALIASES.get(text.strip().lower(), text.strip().lower())
    kv = {}
    if params:
        for item in params.split(","):
            key, _, value = item.partition("=")
            kv[key.strip()] = float(value)
    return DensityKind(name, kv)


def sample_sources(kinds, d: int, n: int, seed: int) -> np.ndarray:
    """``n x d`` matrix of independent columns.

    ``kinds`` is one :class:`DensityKind` (or name) for every column, or a
    sequence of ``d`` of them. Column ``l`` is drawn from substream
    ``("sources", l)`` so adding columns never changes existing ones.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if isinstance(kinds, (str, DensityKind)):
        kinds = [kinds] * d
    kinds = [parse_density(k) if isinstance(k, str) else k for k in kinds]
    if len(kinds) != d:
        raise ValueError(f"{len(kinds)} densities given for d={d}")
    S = np.empty((n, d))
    for l, kind in enumerate(kinds):
        S[:, l] = kind.draw(substream(seed, "sources", l), n)
    return S


def rotation(d: int, angle: float, plane: tuple[int, int] = (0, 1)) -> np.ndarray:
    """Planar rotation by ``angle`` radians in coordinate plane ``(a, b)``."""
    a, b = plane
    if a == b or not (0 <= a < d and 0 <= b < d):
        raise ValueError(f"invalid rotation plane {plane} for d={d}")
    R = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    R[a, a] = R[b, b] = c
    R[a, b], R[b, a] = -s, s
    return R


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of SO(d)."""
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


@dataclass(frozen=True)
class MixingSpec:
    """One of ``identity``, ``rotation`` (degrees, plane), ``random`` or ``matrix``."""

    kind: str
    angle_deg: float = 0.0
    plane: tuple[int, int] = (0, 1)
    matrix: tuple | None = None

    def describe(self) -> str:
        if self.kind == "rotation":
            return f"rotation:{self.angle_deg:g}"
        return self.kind


def parse_mixing(text: str) -> MixingSpec:
    """Parse ``identity``, ``random``, ``rotation:<deg>[:a,b]`` or ``file:<path>``."""
    head, _, rest = text.partition(":")
    head = head.strip().lower()
    if head in ("identity", "random") and not rest:
        return MixingSpec(head)
    if head == "rotation" and rest:
        angle, _, plane = rest.partition(":")
        pl = tuple(int(v) for v in plane.split(",")) if plane else (0, 1)
        return MixingSpec("rotation", angle_deg=float(angle), plane=pl)
    if head == "file" and rest:
        M = np.loadtxt(rest, delimiter=",", ndmin=2)
        return MixingSpec("matrix", matrix=tuple(map(tuple, M)))
    raise ValueError(f"cannot parse mixing {text!r}; use identity|random|rotation:<deg>|file:<path>")


def make_mixing(spec: MixingSpec, d: int, seed: int = 0) -> np.ndarray:
    if spec.kind == "identity":
        return np.eye(d)
    if spec.kind == "rotation":
        return rotation(d, np.deg2rad(spec.angle_deg), spec.plane)
    if spec.kind == "random":
        return random_rotation(d, substream(seed, "mixing"))
    if spec.kind == "matrix":
        A = np.array(spec.matrix, dtype=float)
        if A.shape != (d, d):
            raise ValueError(f"mixing matrix has shape {A.shape}, expected {(d, d)}")
        if np.linalg.cond(A) > 1e12:
            raise np.linalg.LinAlgError("mixing matrix is singular")
        return A
    raise ValueError(f"unknown mixing kind {spec.kind!r}")


def mix(S, A) -> np.ndarray:
    """Row-wise ``X_i = A S_i``."""
    S = np.asarray(S, dtype=float)
    A = np.asarray(A, dtype=float)
    if S.ndim != 2 or A.shape != (S.shape[1], S.shape[1]):
        raise ValueError(f"shape mismatch: sources {S.shape}, mixing {A.shape}")
    return S @ A.T
