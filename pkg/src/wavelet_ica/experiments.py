"""End-to-end experiments: sensitivity tables, angle sweeps, demixing runs and
the validation suite behind the ``wavelet-ica`` command."""

from __future__ import annotations

import csv
import dataclasses
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, TextIO

import numpy as np

from . import metrics
from .metrics import amari_error, replicate_seed, select_resolution
from .optimizer import (OptimizerConfig, angle_sweep, exp_skew, make_objective, minimize)
from .preprocessing import apply_cube, fit_rotation_cube, to_cube, whiten
from .projection import DEFAULT_CELL_BUDGET, contrast, project, read_sample_csv
from .sources import (make_mixing, mix, parse_density, parse_mixing, rotation, sample_sources,
                      substream)
from .wavelets import PhiTable, WaveletSpec, build_phi_table, make_filter

__all__ = [
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "CsvSink",
    "cmd_table",
    "cmd_sweep",
    "cmd_demix",
    "cmd_validate",
    "Check",
    "replicate_seed",
]

SCHEMA_VERSION = 1

_DEFAULT_MIX = {"table": "rotation:0.5", "sweep": "identity", "demix": "random", "validate": "identity"}


@dataclass
class ExperimentConfig:
    command: str = "demix"
    dim: int = 2
    nobs: int = 10000
    j: str = "3"
    smoothness: float = 2.0
    besov_p: float = 2.0
    j_min: int = 0
    j_max: int = 8
    wavelet: str = "D4"
    precision: int = 10
    density: str = "uniform"
    density_params: str = ""
    mix: str = ""
    seed: int = 0
    runs: int = 1
    out: str = ""
    trace: str = ""
    input: str = ""
    margin: float = 0.0
    rescale: str = "once"
    whitening: str = "pca"
    method: str = "gradient"
    angles: int = 90
    max_iter: int = 20
    tol_contrast: float = 1e-5
    tol_grad: float = 1e-6
    fd_step: float = 1e-2
    cell_budget: int = DEFAULT_CELL_BUDGET
    inject: str = ""

    def __post_init__(self):
        self.j = str(self.j)

    # -- plain-text config ---------------------------------------------------
    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(f.default) for f in dataclasses.fields(cls)}

    @classmethod
    def parse_pairs(cls, pairs: Iterable[tuple[str, str]]) -> dict:
        types = cls.field_types()
        out = {}
        for key, value in pairs:
            name = key.strip().replace("-", "_")
            if name not in types:
                raise ValueError(f"unknown config key {key!r}")
            kind = types[name]
            value = value.strip()
            out[name] = int(float(value)) if kind is int else kind(value)
        return out

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
            pairs.append((key, value))
        values = cls.parse_pairs(pairs)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    # -- derived values ------------------------------------------------------
    def validate(self) -> None:
        if self.command not in _DEFAULT_MIX:
            raise ValueError(f"unknown command {self.command!r}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.nobs < 1 or self.runs < 1:
            raise ValueError("nobs and runs must be >= 1")
        if self.precision < 1:
            raise ValueError("precision must be >= 1")
        if self.j_min < 0 or self.j_max < self.j_min:
            raise ValueError(f"invalid j range {self.j_min}..{self.j_max}")
        if self.rescale not in ("once", "per-step"):
            raise ValueError("rescale must be 'once' or 'per-step'")
        if self.whitening not in ("pca", "symmetric"):
            raise ValueError("whitening must be 'pca' or 'symmetric'")
        if self.method not in ("gradient", "sweep"):
            raise ValueError("method must be 'gradient' or 'sweep'")
        if self.angles < 2:
            raise ValueError("angles must be >= 2")
        self.resolution()
        self.optimizer()
        self.densities()
        self.mixing()
        WaveletSpec.from_name(self.wavelet)

    def resolution(self, n: int | None = None, d: int | None = None) -> int:
        if self.j.strip().lower() == "auto":
            return select_resolution(n or self.nobs, d or self.dim, self.smoothness, self.besov_p)
        j = int(self.j)
        if j < 0:
            raise ValueError(f"j must be >= 0 or 'auto', got {j}")
        return j

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(fd_step=self.fd_step, max_iterations=self.max_iter,
                               contrast_tol=self.tol_contrast, grad_tol=self.tol_grad)

    def densities(self):
        names = [s for s in self.density.split(",") if s.strip()]
        if len(names) not in (1, self.dim):
            raise ValueError(f"give one density or {self.dim}, got {len(names)}")
        kinds = [parse_density(s, self.density_params or None) for s in names]
        return kinds * self.dim if len(kinds) == 1 else kinds

    def mixing(self):
        return parse_mixing(self.mix or _DEFAULT_MIX[self.command])

    def table(self) -> PhiTable:
        return build_phi_table(WaveletSpec.from_name(self.wavelet), self.precision)


class CsvSink:
    """CSV writer with a leading schema tag and per-row flushing."""

    def __init__(self, stream: TextIO, kind: str, columns: list[str]):
        self.stream = stream
        self.columns = columns
        stream.write(f"# schema: wavelet-ica/{kind}/v{SCHEMA_VERSION}\n")
        self.writer = csv.writer(stream, lineterminator="\n")
        self.writer.writerow(columns)
        stream.flush()

    def comment(self, text: str) -> None:
        self.stream.write(f"# {text}\n")

    def row(self, values: dict) -> None:
        self.writer.writerow([_fmt(values.get(c, "")) for c in self.columns])
        self.stream.flush()


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def _relocate(cfg: ExperimentConfig, Y: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    if cfg.rescale == "per-step":
        return lambda Z: to_cube(Z, cfg.margin)
    cube = fit_rotation_cube(Y, cfg.margin)
    return lambda Z: apply_cube(cube, Z)


def _timed_contrast(sample, table, j, budget):
    t0 = time.perf_counter()
    coeffs = project(sample, table, j, cell_budget=budget)
    t1 = time.perf_counter()
    value = contrast(coeffs)
    return value, t1 - t0, time.perf_counter() - t1


# -- table -------------------------------------------------------------------

TABLE_COLUMNS = ["j", "indep", "mixed", "ratio", "t_project", "t_contrast"]


def cmd_table(cfg: ExperimentConfig, sink: CsvSink | None = None) -> list[dict]:
    """Contrast of an independent and a mixed whitened sample per resolution.

    The independent sample is whitened symmetrically so that it stays
    independent; the mixed sample is the same data rotated by the mixing.
    """
    cfg.validate()
    table = cfg.table()
    S = sample_sources(cfg.densities(), cfg.dim, cfg.nobs, cfg.seed)
    Y = whiten(S, symmetric=True).whitened
    A = make_mixing(cfg.mixing(), cfg.dim, cfg.seed)
    relocate = _relocate(cfg, Y)
    indep, mixed = relocate(Y), relocate(Y @ A.T)
    if sink:
        sink.comment(f"wavelet={table.spec.name} L={cfg.precision} d={cfg.dim} n={cfg.nobs} "
                     f"mixing={cfg.mixing().describe()} amari={amari_error(A, np.eye(cfg.dim)):.4f}")
    rows = []
    for j in range(cfg.j_min, cfg.j_max + 1):
        ci, tp1, tc1 = _timed_contrast(indep, table, j, cfg.cell_budget)
        cm, tp2, tc2 = _timed_contrast(mixed, table, j, cfg.cell_budget)
        row = {"j": j, "indep": ci, "mixed": cm, "ratio": cm / ci if ci > 0 else float("nan"),
               "t_project": tp1 + tp2, "t_contrast": tc1 + tc2}
        rows.append(row)
        if sink:
            sink.row(row)
    return rows


# -- sweep -------------------------------------------------------------------

SWEEP_COLUMNS = ["angle", "contrast", "amari"]


def cmd_sweep(cfg: ExperimentConfig, sink: CsvSink | None = None) -> list[dict]:
    """Contrast and Amari error of ``W(theta)`` over a grid of [0, pi/2), d = 2."""
    cfg.validate()
    if cfg.dim != 2:
        raise ValueError(f"the angle sweep needs dim = 2, got {cfg.dim}")
    table = cfg.table()
    j = cfg.resolution()
    S = sample_sources(cfg.densities(), 2, cfg.nobs, cfg.seed)
    A = make_mixing(cfg.mixing(), 2, cfg.seed)
    wr = whiten(mix(S, A), symmetric=cfg.whitening == "symmetric")
    objective = make_objective(wr.whitened, table, j, rescale=cfg.rescale, margin=cfg.margin,
                               cell_budget=cfg.cell_budget)
    angles = np.arange(cfg.angles) * (np.pi / 2) / cfg.angles
    values = angle_sweep(objective, angles)
    rows = []
    for theta, c in zip(angles, values):
        row = {"angle": float(theta), "contrast": float(c),
               "amari": amari_error(A, rotation(2, theta), wr.whitener)}
        rows.append(row)
        if sink:
            sink.row(row)
    return rows


# -- demix -------------------------------------------------------------------

REPLICATE_COLUMNS = ["replicate", "status", "iterations", "evaluations", "amari_start", "amari_end",
                     "contrast_start", "contrast_end", "t_optimize"]
TRACE_COLUMNS = ["replicate", "iteration", "contrast", "amari"]


@dataclass
class DemixReport:
    replicates: list[dict] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    states: list = field(default_factory=list)
    demixing: np.ndarray | None = None

    def summary(self) -> dict:
        ok = [r for r in self.replicates if not str(r["status"]).startswith("failed")]
        keys = ["amari_start", "amari_end", "contrast_start", "contrast_end", "iterations"]
        out = {k: float(np.mean([r[k] for r in ok])) if ok else float("nan") for k in keys}
        out["runs"] = len(self.replicates)
        out["failed"] = len(self.replicates) - len(ok)
        return out


def _sweep_minimize(objective, d: int, grid: int):
    angles = np.arange(grid) * (np.pi / 2) / grid
    values = angle_sweep(objective, angles)
    best = int(np.argmin(values))
    return rotation(d, angles[best]), float(values[best]), float(values[0])


def _demix_one(cfg: ExperimentConfig, table: PhiTable, X: np.ndarray, A: np.ndarray | None,
               r: int, report: DemixReport, trace_sink: CsvSink | None) -> dict:
    n, d = X.shape
    j = cfg.resolution(n, d)
    wr = whiten(X, symmetric=cfg.whitening == "symmetric")

    def amari(W):
        return amari_error(A, W, wr.whitener) if A is not None else float("nan")

    t0 = time.perf_counter()
    if cfg.method == "sweep":
        if d != 2:
            raise ValueError("method 'sweep' needs dim = 2")
        objective = make_objective(wr.whitened, table, j, rescale=cfg.rescale, margin=cfg.margin,
                                   cell_budget=cfg.cell_budget)
        W, c_end, c_start = _sweep_minimize(objective, d, cfg.angles)
        states = []
        status, iterations, evaluations = "swept", 1, cfg.angles
        points = [(0, c_start, np.eye(d)), (1, c_end, W)]
    else:
        objective = make_objective(wr.whitened, table, j, rescale=cfg.rescale, margin=cfg.margin,
                                   cell_budget=cfg.cell_budget)
        res = minimize(wr.whitened, table, j, cfg.optimizer(), objective=objective)
        states = res.trace
        W = res.final.W
        c_start, c_end = res.trace[0].contrast, res.final.contrast
        status, iterations, evaluations = res.status, res.iterations, res.evaluations
        points = [(s.iteration, s.contrast, s.W) for s in res.trace]
    elapsed = time.perf_counter() - t0

    report.states.extend(states)
    report.demixing = W @ wr.whitener
    for it, c, Wt in points:
        row = {"replicate": r, "iteration": it, "contrast": c, "amari": amari(Wt)}
        report.traces.append(row)
        if trace_sink:
            trace_sink.row(row)
    return {"replicate": r, "status": status, "iterations": iterations, "evaluations": evaluations,
            "amari_start": amari(np.eye(d)), "amari_end": amari(W),
            "contrast_start": c_start, "contrast_end": c_end, "t_optimize": elapsed}


def cmd_demix(cfg: ExperimentConfig, sink: CsvSink | None = None,
              trace_sink: CsvSink | None = None) -> DemixReport:
    """Independent demixing replicates; external ``input`` data gives a single run."""
    cfg.validate()
    table = cfg.table()
    report = DemixReport()
    if cfg.input:
        X = read_sample_csv(cfg.input)
        jobs = [(0, lambda: (X, None))]
    else:
        kinds, spec = cfg.densities(), cfg.mixing()

        def make(r):
            rs = replicate_seed(cfg.seed, r)
            A = make_mixing(spec, cfg.dim, rs)
            return mix(sample_sources(kinds, cfg.dim, cfg.nobs, rs), A), A

        jobs = [(r, lambda r=r: make(r)) for r in range(cfg.runs)]

    for r, job in jobs:
        try:
            X, A = job()
            row = _demix_one(cfg, table, X, A, r, report, trace_sink)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            row = {"replicate": r, "status": f"failed: {exc}"}
            for c in REPLICATE_COLUMNS[2:]:
                row[c] = float("nan")
        report.replicates.append(row)
        if sink:
            sink.row(row)
    return report


def format_summary(cfg: ExperimentConfig, report: DemixReport) -> str:
    s = report.summary()
    head = f"{'density':<14}{'obs':>8}{'dim':>5}{'L':>4}{'Amari start':>13}{'Amari end':>11}" \
           f"{'cont. start':>13}{'cont. end':>12}{'it.':>6}"
    line = (f"{cfg.density:<14}{cfg.nobs:>8}{cfg.dim:>5}{cfg.precision:>4}"
            f"{s['amari_start']:>13.3f}{s['amari_end']:>11.3f}"
            f"{s['contrast_start']:>13.3E}{s['contrast_end']:>12.3E}{s['iterations']:>6.1f}")
    text = f"{head}\n{line}\nruns={s['runs']} failed={s['failed']}\n"
    if cfg.input and report.demixing is not None:
        text += "demixing matrix (W N):\n" + np.array2string(report.demixing, precision=6) + "\n"
    return text


# -- validate ----------------------------------------------------------------

class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def _check_filters(specs: list[WaveletSpec]) -> Check:
    worst = 0.0
    for spec in specs:
        h = spec.h
        N = spec.genus
        worst = max(worst, abs(h.sum() - np.sqrt(2)))
        for m in range(N):
            worst = max(worst, abs(np.dot(h[: h.size - 2 * m], h[2 * m:]) - (m == 0)))
            k = np.arange(h.size)
            worst = max(worst, abs(np.sum((-1.0) ** k * k ** m * h)))
    return Check("filter invariants", worst <= 1e-10, f"max violation {worst:.2e}")


def _check_tables(specs: list[WaveletSpec], L: int = 12) -> Check:
    worst_pu = worst_mass = worst_orth = 0.0
    for spec in specs:
        t = build_phi_table(spec, L)
        v, step = t.values, 1 << L
        padded = np.zeros((spec.support_len + 1) * step)
        padded[: v.size] = v
        pu = padded.reshape(-1, step).sum(axis=0)
        worst_pu = max(worst_pu, np.abs(pu - 1).max())
        worst_mass = max(worst_mass, abs(v.sum() / step - 1))
        if spec.genus > 1:
            for k in range(-(2 * spec.genus - 2), 2 * spec.genus - 1):
                shifted = np.zeros_like(v)
                if k >= 0:
                    shifted[k * step:] = v[: v.size - k * step]
                else:
                    shifted[: v.size + k * step] = v[-k * step:]
                worst_orth = max(worst_orth, abs(np.dot(v, shifted) / step - (k == 0)))
    ok = worst_pu <= 1e-8 and worst_mass <= 1e-6 and worst_orth <= 1e-3
    return Check("phi tables", ok, f"partition {worst_pu:.1e}, mass {worst_mass:.1e}, "
                                   f"orthonormality {worst_orth:.1e}")


def _check_oracle(seed: int) -> Check:
    haar = build_phi_table(make_filter(1), 10)
    worst = 0.0
    for i in range(20):
        rng = substream(seed, "validate-oracle", i)
        d, j = 2 + i % 2, 1 + i % 4
        X = rng.random((500, d))
        worst = max(worst, abs(contrast(project(X, haar, j)) - metrics.haar_contrast_oracle(X, j)))
    return Check("Haar histogram oracle", worst <= 1e-12, f"max gap {worst:.1e}")


def _check_zero(seed: int) -> Check:
    worst = 0.0
    for genus in (1, 2, 3, 4):
        t = build_phi_table(make_filter(genus), 10)
        for d in (2, 3):
            for j in (0, 1, 2, 3):
                x = substream(seed, "validate-zero", genus, d, j).random((1, d))
                worst = max(worst, contrast(project(x, t, j)))
        X = substream(seed, "validate-zero", genus).random((200, 2))
        if genus == 1:
            worst = max(worst, contrast(project(X, t, 0)))
    return Check("exact zeros", worst <= 1e-15, f"max {worst:.1e}")


def _check_amari() -> Check:
    a = amari_error(rotation(2, np.deg2rad(0.5)), np.eye(2))
    P = np.diag([2.0, -3.0, 0.5])[[2, 0, 1]]
    z = amari_error(P, np.eye(3))
    return Check("Amari calibration", 0.7 <= a <= 1.0 and z == 0.0, f"half degree {a:.4f}, perm {z}")


def _check_rotations(seed: int) -> Check:
    worst = 0.0
    rng = substream(seed, "validate-expm")
    for _ in range(50):
        d = int(rng.integers(2, 7))
        M = rng.standard_normal((d, d))
        B = M - M.T
        B *= rng.uniform(0, 10) / np.linalg.norm(B)
        R = exp_skew(B)
        worst = max(worst, np.linalg.norm(R @ R.T - np.eye(d)), abs(np.linalg.det(R) - 1))
    return Check("exp map into SO(d)", worst <= 1e-10, f"max defect {worst:.1e}")


def _check_uv(seed: int) -> tuple[Check, Check]:
    t = build_phi_table(make_filter(2), 10)
    rng = substream(seed, "validate-uv")
    X = rng.random((3, 2))
    gap = 0.0
    for rho, sigma in ((2, 0), (1, 1), (0, 2), (1, 2)):
        a = metrics.u_v_statistics(X, t, 1, (0, 1), rho, sigma, [l % 2 for l in range(sigma)])
        b = metrics.u_v_statistics(X, t, 1, (0, 1), rho, sigma, [l % 2 for l in range(sigma)],
                                   enumerate_all=True)
        gap = max(gap, abs(a.u_stat - b.u_stat), abs(a.v_stat - b.v_stat))
    enum = Check("U/V enumeration", gap <= 1e-14, f"max gap {gap:.1e}")

    ns = [50, 100, 200, 400, 800, 1600]
    means = []
    for n in ns:
        diffs = []
        for r in range(100):
            Xr = substream(seed, "validate-uv", n, r).random((n, 2))
            p = metrics.u_v_statistics(Xr, t, 1, (0, 1), 1, 1, [0])
            diffs.append(abs(p.u_stat - p.v_stat))
        means.append(np.mean(diffs))
    slope, se = metrics.fit_loglog(np.log(ns), np.log(means))
    return enum, Check("|U - V| rate", abs(slope + 1) <= 0.3, f"slope {slope:.3f} +/- {1.96 * se:.3f}")


def _check_risk(seed: int) -> Check:
    t = build_phi_table(make_filter(1), 10)
    rows = metrics.risk_curve("uniform", 2, [1, 2, 3, 4], 2000, 40, seed, t)
    slope, se = metrics.fit_loglog([r.j * 2 * math.log(2) for r in rows], [math.log(r.variance) for r in rows])
    return Check("variance vs 2^(jd)", abs(slope - 1) <= 0.4, f"slope {slope:.3f} +/- {1.96 * se:.3f}")


def _check_resolution() -> Check:
    got = (select_resolution(1000, 2, math.inf), select_resolution(2 ** 10, 2, 2.0, 2.0),
           select_resolution(100000, 2, 2.0, 2.0))
    return Check("resolution rule", got == (0, 1, 2), f"got {got}")


def cmd_validate(cfg: ExperimentConfig, report: Callable[[Check], None] | None = None) -> list[Check]:
    """Run the invariant, oracle and slope checks; ``cfg.inject`` plants a fault."""
    specs = [make_filter(g) for g in (1, 2, 3, 4)]
    if cfg.inject == "broken-filter":
        h = list(specs[1].filter)
        h[0] += 1e-3
        specs[1] = WaveletSpec(genus=2, filter=tuple(h))
    elif cfg.inject:
        raise ValueError(f"unknown fault {cfg.inject!r}; the only one is 'broken-filter'")
    steps: list[Callable[[], Check | tuple]] = [
        lambda: _check_filters(specs),
        lambda: _check_tables([make_filter(g) for g in (1, 2, 3, 4)]),
        lambda: _check_oracle(cfg.seed),
        lambda: _check_zero(cfg.seed),
        _check_amari,
        lambda: _check_rotations(cfg.seed),
        lambda: _check_uv(cfg.seed),
        lambda: _check_risk(cfg.seed),
        _check_resolution,
    ]
    checks = []
    for step in steps:
        try:
            got = step()
        except Exception as exc:  # a crashing check is a failed check
            got = Check(getattr(step, "__name__", "check"), False, f"error: {exc}")
        for c in got if isinstance(got, tuple) and not isinstance(got, Check) else (got,):
            checks.append(c)
            if report:
                report(c)
    return checks


def open_output(path: str) -> TextIO:
    if not path or path == "-":
        return sys.stdout
    return open(path, "w", newline="")
