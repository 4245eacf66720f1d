"""Travelling steady tubes glued into time-dependent Euler flows on T^d.

Coordinates split as x = (x', x'') with x' in T^m and x'' in T^(d-m).  Tube j
is a copy of a steady flow centred at x' = y^j that slides along x'' with
constant speed nu^j; a background shear w(x) = (0, F(x')), equal to (0, nu^j)
near tube j, supplies the transport.  Because w is locally constant on every
tube and the tubes are disjoint, the sum is an exact Euler solution whose
pressure is the sum of the tube pressures.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .fields import (
    TWO_PI,
    CutoffChi,
    FrequencyVector,
    SampledField,
    TorusPoint,
    grid_points,
    torus_distance,
    wrap_to_pi,
)
from .stationary import ExternalSteadyState, StationaryFlow
from .verify.spectral import MIN_POINTS, SpectralWorkspace, grid_shape

FieldEvaluator = Callable[[np.ndarray], np.ndarray]


class ConfigError(ValueError):
    """Raised when a configuration breaks a hard geometric assumption."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(v.message for v in report.violations))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        conv = lambda vs: [{"code": v.code, "message": v.message, **v.detail} for v in vs]
        return {"valid": self.valid, "violations": conv(self.violations), "warnings": conv(self.warnings)}


def default_centers(J: int, m: int) -> list[tuple[float, ...]]:
    """J points equally spaced along the first axis of T^m."""
    return [(TWO_PI * j / J,) + (0.0,) * (m - 1) for j in range(J)]


@dataclass(frozen=True, eq=False)
class GluingConfig:
    d: int
    m: int
    eps: float
    centers: tuple[tuple[float, ...], ...]
    speeds: tuple[tuple[float, ...], ...]
    base_flow: StationaryFlow | ExternalSteadyState | None = None
    sharpness: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(tuple(float(c) for c in np.atleast_1d(y)) for y in self.centers))
        object.__setattr__(self, "speeds", tuple(tuple(float(c) for c in np.atleast_1d(v)) for v in self.speeds))
        if self.base_flow is None and self.eps > 0 and self.d >= 2 and self.d % 2 == 0:
            object.__setattr__(self, "base_flow", StationaryFlow(self.d, self.eps, self.sharpness, self.amplitude))

    @property
    def J(self) -> int:
        return len(self.centers)

    @property
    def cutoff(self) -> CutoffChi:
        return CutoffChi(self.eps)

    def validate(self) -> ValidationReport:
        return validate_config(self)

    def to_dict(self) -> dict:
        return {
            "d": self.d, "m": self.m, "J": self.J, "eps": self.eps,
            "centers": [list(y) for y in self.centers],
            "speeds": [list(v) for v in self.speeds],
            "sharpness": self.sharpness,
            "amplitude": self.amplitude,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GluingConfig":
        d, m = int(doc["d"]), int(doc["m"])
        J = int(doc.get("J", len(doc["speeds"])))
        centers = doc.get("centers") or default_centers(J, m)
        return cls(d, m, float(doc["eps"]), centers, doc["speeds"], sharpness=float(doc.get("sharpness", 1.0)), amplitude=float(doc.get("amplitude", 1.0)))


def validate_config(config: GluingConfig) -> ValidationReport:
    """Check the geometric assumptions; every problem is reported, nothing raises."""
    bad: list[Violation] = []
    soft: list[Violation] = []
    d, m, eps = config.d, config.m, config.eps
    if not (1 <= m <= d - 1):
        bad.append(Violation("split", f"split index m={m} must satisfy 1 <= m <= d-1={d - 1}", {"m": m, "d": d}))
    if not eps > 0:
        bad.append(Violation("eps", f"eps={eps} must be positive", {"eps": eps}))
    if config.J == 0:
        bad.append(Violation("tubes", "at least one tube is required"))
    if len(config.speeds) != config.J:
        bad.append(Violation("speeds", f"{len(config.speeds)} speeds for {config.J} centers"))
    for j, y in enumerate(config.centers):
        if len(y) != m:
            bad.append(Violation("center_dim", f"center {j} has {len(y)} coordinates, expected m={m}", {"j": j}))
    for j, v in enumerate(config.speeds):
        if len(v) != d - m:
            bad.append(Violation("speed_dim", f"speed {j} has {len(v)} entries, expected d-m={d - m}", {"j": j}))
    if bad:
        return ValidationReport(tuple(bad))
    for j in range(config.J):
        for k in range(j + 1, config.J):
            rho = float(torus_distance(np.array(config.centers[j]), np.array(config.centers[k])))
            if not rho > 4 * eps:
                bad.append(Violation(
                    "separation",
                    f"tubes {j} and {k}: rho={rho:.6g} <= 4*eps={4 * eps:.6g} (centers must be more than 4 eps apart)",
                    {"j": j, "k": k, "rho": rho, "bound": 4 * eps},
                ))
    if not 2 * eps < np.pi:
        bad.append(Violation("cutoff_width", f"2*eps={2 * eps:.6g} must be below pi so each cutoff sees one image",
                             {"eps": eps}))
    base = config.base_flow
    if base is None:
        bad.append(Violation("base_flow", f"no closed-form steady flow in odd dimension d={d}; supply an external one"))
    else:
        if base.dim != d:
            bad.append(Violation("base_flow", f"base flow has dim {base.dim}, expected {d}"))
        if not np.isclose(base.eps_scale, eps):
            bad.append(Violation("base_flow", f"base flow support {base.eps_scale} differs from eps={eps}"))
        if not base.eps_scale < np.pi:
            bad.append(Violation("base_flow", "base flow support radius must be below pi"))
    limit = TWO_PI / (10 * config.J) if config.J else np.inf
    if eps > limit:
        soft.append(Violation("smallness", f"eps={eps:.6g} exceeds 2 pi/(10 J)={limit:.6g}",
                              {"eps": eps, "limit": limit}))
    return ValidationReport(tuple(bad), tuple(soft))


@dataclass(frozen=True, eq=False)
class GluedSolution:
    """u(t, x) = sum_j v(x' - y^j, x'' - phase_j - speed_j t) + (0, F(x')).

    The tube speeds default to the configured ones and the phases to zero;
    :func:`embed_U` overrides both from an embedding matrix.
    """

    config: GluingConfig
    phases: np.ndarray | None = None
    tube_speeds: np.ndarray | None = None

    def __post_init__(self):
        report = self.config.validate()
        if not report.valid:
            raise ConfigError(report)
        for w in report.warnings:
            warnings.warn(w.message, stacklevel=3)
        c = self.config
        speeds = np.asarray(c.speeds if self.tube_speeds is None else self.tube_speeds, dtype=float)
        phases = np.zeros_like(speeds) if self.phases is None else np.asarray(self.phases, dtype=float)
        if speeds.shape != (c.J, c.d - c.m) or phases.shape != speeds.shape:
            raise ValueError(f"speeds and phases must have shape {(c.J, c.d - c.m)}")
        object.__setattr__(self, "tube_speeds", speeds)
        object.__setattr__(self, "phases", phases)

    @property
    def dim(self) -> int:
        return self.config.d

    @cached_property
    def _centers(self) -> np.ndarray:
        return np.asarray(self.config.centers, dtype=float)

    def _local(self, t: float, x: np.ndarray, j: int) -> np.ndarray:
        m = self.config.m
        dx1 = wrap_to_pi(x[..., :m] - self._centers[j])
        dx2 = wrap_to_pi(x[..., m:] - self.phases[j] - self.tube_speeds[j] * t)
        return np.concatenate([dx1, dx2], axis=-1)

    def background(self, x) -> np.ndarray:
        """F(x') = sum_j speed_j chi(rho(x', y^j)), shape (..., d-m)."""
        x = np.asarray(x, dtype=float)
        m, chi = self.config.m, self.config.cutoff
        out = np.zeros(x.shape[:-1] + (self.config.d - m,))
        for j in range(self.config.J):
            out += chi(torus_distance(x[..., :m], self._centers[j]))[..., None] * self.tube_speeds[j]
        return out

    def w(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., self.config.m:] = self.background(x)
        return out

    def velocity(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        base = self.config.base_flow
        out = self.w(x)
        for j in range(self.config.J):
            out += base.velocity(self._local(t, x, j))
        return out

    def pressure(self, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        base = self.config.base_flow
        out = np.zeros(x.shape[:-1])
        for j in range(self.config.J):
            out += base.pressure(self._local(t, x, j))
        return out

    def _require_2d(self):
        if self.config.d != 2:
            raise ValueError("stream function and scalar vorticity exist for d = 2 only")

    def vorticity(self, t: float, x) -> np.ndarray:
        """Lap psi = sum of tube vorticities minus F'(x1) (d = 2)."""
        self._require_2d()
        x = np.asarray(x, dtype=float)
        base, chi = self.config.base_flow, self.config.cutoff
        out = np.zeros(x.shape[:-1])
        for j in range(self.config.J):
            out += base.vorticity(self._local(t, x, j))
            s = wrap_to_pi(x[..., 0] - self._centers[j, 0])
            out -= self.tube_speeds[j, 0] * chi.derivative(s)
        return out

    def mean_velocity(self) -> np.ndarray:
        """Torus average of u; only the background contributes (d = 2)."""
        self._require_2d()
        s = np.linspace(-np.pi, np.pi, 4096, endpoint=False)
        profile = self.config.cutoff(s).mean()
        return np.array([0.0, float(self.tube_speeds[:, 0].sum() * profile)])

    def sample_velocity(self, t: float, resolution) -> SampledField:
        shape = grid_shape(resolution, self.dim)
        u = self.velocity(t, grid_points(shape))
        return SampledField(np.moveaxis(u, -1, 0), {"t": float(t), "kind": "velocity"})

    def at_time(self, t: float) -> FieldEvaluator:
        return lambda x: self.velocity(t, x)


def eval_w(x, config: GluingConfig) -> np.ndarray:
    return GluedSolution(config).w(x)


def eval_solution(t: float, x, config: GluingConfig) -> np.ndarray:
    return GluedSolution(config).velocity(t, x)


def eval_pressure(t: float, x, config: GluingConfig) -> np.ndarray:
    return GluedSolution(config).pressure(t, x)


@dataclass(frozen=True, eq=False)
class EmbeddingSpec:
    """Linear torus map theta -> A theta (mod 2 pi) with frequency nu."""

    matrix: np.ndarray
    nu: FrequencyVector

    def __post_init__(self):
        A = np.asarray(self.matrix)
        if A.ndim != 2:
            raise ValueError("embedding matrix must be two-dimensional")
        if not np.all(A == np.round(A)):
            raise ValueError("embedding matrix must have integer entries")
        A = A.astype(np.int64)
        nu = self.nu if isinstance(self.nu, FrequencyVector) else FrequencyVector(tuple(self.nu))
        if A.shape[1] != nu.dim:
            raise ValueError(f"matrix has {A.shape[1]} columns but nu has {nu.dim} entries")
        rows = {tuple(r) for r in A}
        for i in range(A.shape[1]):
            e = tuple(int(i == k) for k in range(A.shape[1]))
            if e not in rows:
                raise ValueError(f"matrix has no row equal to unit vector e_{i}; injectivity is not certified")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "nu", nu)

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    def block(self, j: int, width: int) -> np.ndarray:
        return self.matrix[j * width:(j + 1) * width]

    def to_dict(self) -> dict:
        return {"N": self.N, "matrix": self.matrix.tolist(), "nu": list(self.nu.entries)}

    @classmethod
    def from_dict(cls, doc: dict) -> "EmbeddingSpec":
        return cls(np.asarray(doc["matrix"]), FrequencyVector(tuple(doc["nu"])))

    @classmethod
    def identity(cls, nu: Sequence[float]) -> "EmbeddingSpec":
        return cls(np.eye(len(nu), dtype=np.int64), FrequencyVector(tuple(nu)))


def embedded_solution(theta, config: GluingConfig, spec: EmbeddingSpec) -> GluedSolution:
    """The solution t -> U(theta + nu t): phases A_j theta, speeds A_j nu."""
    width = config.d - config.m
    if spec.matrix.shape[0] != config.J * width:
        raise ValueError(f"embedding has {spec.matrix.shape[0]} rows, expected J(d-m)={config.J * width}")
    theta = np.asarray(theta.as_array() if isinstance(theta, TorusPoint) else theta, dtype=float)
    if theta.shape != (spec.N,):
        raise ValueError(f"theta must have {spec.N} entries")
    phases = (spec.matrix @ theta).reshape(config.J, width)
    speeds = (spec.matrix @ spec.nu.as_array()).reshape(config.J, width)
    return GluedSolution(config, phases=phases, tube_speeds=speeds)


def embed_U(theta, t: float, config: GluingConfig, spec: EmbeddingSpec) -> FieldEvaluator:
    return embedded_solution(theta, config, spec).at_time(t)


def integer_rank(vectors: np.ndarray) -> int:
    """Exact rank of a set of integer vectors (rows), by fraction elimination of their Gram matrix."""
    vecs = np.asarray(vectors, dtype=np.int64)
    if vecs.size == 0:
        return 0
    gram = vecs.T @ vecs
    rows = [[Fraction(int(v)) for v in row] for row in gram]
    rank, n = 0, len(rows)
    for col in range(n):
        pivot = next((r for r in range(rank, n) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(n):
            if r != rank and rows[r][col] != 0:
                factor = rows[r][col] / rows[rank][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def non_symmetry_check(field_: FieldEvaluator | SampledField, resolution=None, dim: int | None = None,
                       rel_threshold: float = 1e-8) -> dict:
    """Rank of the integer span of the active Fourier wavevectors of a sampled field."""
    if isinstance(field_, SampledField):
        values = field_.values
    else:
        if resolution is None or dim is None:
            raise ValueError("an evaluator needs both resolution and dim")
        shape = grid_shape(resolution, dim)
        if min(shape) < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} points per axis, got {shape}")
        out = np.asarray(field_(grid_points(shape)), dtype=float)
        values = out[None] if out.shape == shape else np.moveaxis(out, -1, 0)
    shape = values.shape[1:]
    d = len(shape)
    if min(shape) < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points per axis, got {shape}")
    ws = SpectralWorkspace(shape)
    mags = np.stack([np.abs(ws.fft(c)) for c in values]).max(axis=0)
    peak = mags.max()
    if peak == 0:
        return {"rank": 0, "dim": d, "verdict": "symmetric", "active_modes": 0}
    active = mags > rel_threshold * peak
    ks = np.stack([np.broadcast_to(k, ws.spectral_shape)[active] for k in ws.int_wavenumbers], axis=-1)
    ks = ks[np.any(ks != 0, axis=1)].astype(np.int64)
    # The rank is decided by a small spanning subset; cap the Gram work.
    basis: list[np.ndarray] = []
    rank = 0
    for k in ks:
        trial = integer_rank(np.array(basis + [k]))
        if trial > rank:
            basis.append(k)
            rank = trial
            if rank == d:
                break
    return {
        "rank": rank,
        "dim": d,
        "verdict": "non-symmetric" if rank == d else "symmetric",
        "active_modes": int(active.sum()),
    }


def orbit_coverage(nu, theta0, T: float, delta: float) -> float:
    """Fraction of the cells of side about delta on T^N visited by theta0 + nu t, 0 <= t <= T."""
    nu = np.asarray(nu.as_array() if isinstance(nu, FrequencyVector) else nu, dtype=float)
    theta0 = np.asarray(theta0.as_array() if isinstance(theta0, TorusPoint) else theta0, dtype=float)
    N = nu.size
    if N > 3:
        raise ValueError("orbit coverage is limited to N <= 3")
    ncell = int(np.ceil(TWO_PI / delta))
    dt = delta / (2.0 * np.linalg.norm(nu))
    steps = int(np.ceil(T / dt)) + 1
    visited = np.zeros((ncell,) * N, dtype=bool)
    chunk = 1 << 20
    for start in range(0, steps, chunk):
        t = np.minimum(np.arange(start, min(start + chunk, steps)) * dt, T)
        pts = np.mod(theta0[None, :] + t[:, None] * nu[None, :], TWO_PI)
        idx = np.minimum((pts * ncell / TWO_PI).astype(np.int64), ncell - 1)
        visited[tuple(idx.T)] = True
    return float(visited.mean())


def orbit_density_diagnostic(spec: EmbeddingSpec | Sequence[float], theta0, T: float, delta: float) -> float:
    nu = spec.nu if isinstance(spec, EmbeddingSpec) else spec
    return orbit_coverage(nu, theta0, T, delta)


def config_json(config: GluingConfig, spec: EmbeddingSpec | None = None) -> str:
    doc = {"gluing": config.to_dict()}
    if spec is not None:
        doc["embedding"] = spec.to_dict()
    return json.dumps(doc, indent=2, sort_keys=True)
