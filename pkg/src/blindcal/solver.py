"""Alternating gradient descent for blind calibration, and fixed-calibration tomography.

Each blind iteration takes one Riemannian gradient step in the state (on the
rank-r PSD manifold) followed by one projected Euclidean step in the
calibration vector. The multiplicative gauge between the two is fixed by
moving the trace of the state into the calibration vector.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .error_models import CalibrationVector
from .measurement_map import DataVector, MeasurementMap
from .operators import eig_hermitian, hermitian_part
from .simulator import derive_seed

log = logging.getLogger(__name__)

BLIND = "blind"
TOMOGRAPHY = "calibrated_tomography"
NORMALIZATIONS = ("trace", "project", "none")

_MAX_ZERO_TRACE_RESTARTS = 5
_ZERO_TRACE = 1e-14


class SolverError(RuntimeError):
    """Unrecoverable failure (non-finite objective, repeated zero-trace projections)."""


class ExactFit(ArithmeticError):
    """The search direction is annihilated by the map; the current point is optimal along it."""


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings. Defaults are the blind-calibration settings (rank 1)."""

    rank: int | None = 1
    epsilon: float = 1e-2
    max_iters: int = 100
    init_xi_region: float = 0.15
    init_rho_region: float = 0.10
    allow_sign_flip: bool = True
    mode: str = BLIND
    normalization: str = "trace"
    restarts: int = 8
    # stop once the relative residual changes by less than this per iteration
    stall_tol: float = 1e-9

    def __post_init__(self):
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if self.mode not in (BLIND, TOMOGRAPHY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def rank_for(self, dim: int) -> int:
        r = dim if self.rank is None else self.rank
        if r > dim:
            raise ValueError(f"rank {r} exceeds dimension {dim}")
        return r

    def to_json(self) -> dict:
        return dict(self.__dict__)


# Full-rank tomography run to convergence, trace fixed by projection each step.
TOMOGRAPHY_CONFIG = SolverConfig(rank=None, epsilon=1e-12, max_iters=500, mode=TOMOGRAPHY,
                                 normalization="project", restarts=1, stall_tol=1e-13)


@dataclass(frozen=True, eq=False)
class SolverResult:
    rho_hat: np.ndarray
    xi_hat: CalibrationVector
    residual_history: tuple[float, ...]
    iterations: int
    converged: bool
    stop_reason: str = ""
    seed: int | None = None

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    def to_json(self) -> dict:
        return {
            "xi": self.xi_hat.as_dict(),
            "rho": [[[float(z.real), float(z.imag)] for z in row] for row in self.rho_hat],
            "residual_history": list(self.residual_history),
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "seed": self.seed,
        }


def rho_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def tangent_project(g: np.ndarray, rho: np.ndarray, r: int) -> np.ndarray:
    """Project G onto the tangent space of rank-r matrices at rho: G - (1-P)G(1-P)."""
    dim = rho.shape[0]
    if r >= dim:
        return g.copy()
    _, vecs = eig_hermitian(hermitian_part(rho))
    u = vecs[:, :r]
    comp = np.eye(dim) - u @ u.conj().T
    return g - comp @ g @ comp


def _psd_rank(vals: np.ndarray, vecs: np.ndarray, r: int) -> np.ndarray:
    kept = np.clip(vals[:r], 0.0, None)
    u = vecs[:, :r]
    return (u * kept) @ u.conj().T


def psd_rank_project(a: np.ndarray, r: int) -> np.ndarray:
    """Nearest PSD matrix of rank <= r: keep the r largest nonnegative eigenvalues."""
    vals, vecs = eig_hermitian(hermitian_part(a))
    return _psd_rank(vals, vecs, r)


def signed_psd_rank_project(a: np.ndarray, r: int) -> tuple[np.ndarray, int]:
    """Like ``psd_rank_project`` but also tries -A; returns (projection, sign used)."""
    vals, vecs = eig_hermitian(hermitian_part(a))
    plus = np.clip(vals[:r], 0.0, None).sum()
    minus = np.clip(-vals[::-1][:r], 0.0, None).sum()
    if minus > plus:
        return _psd_rank(-vals[::-1], vecs[:, ::-1], r), -1
    return _psd_rank(vals, vecs, r), 1


def water_filling_shift(vals: np.ndarray, r: int) -> float:
    """Shift lambda with sum of the top-r values of max(vals - lambda, 0) equal to 1.

    ``vals`` must be sorted descending. Uses the sorted-prefix rule.
    """
    top = np.asarray(vals[:r], dtype=float)
    csum = np.cumsum(top)
    ks = np.arange(1, top.size + 1)
    shifts = (csum - 1.0) / ks
    valid = top - shifts > 0
    k = int(np.nonzero(valid)[0].max())
    return float(shifts[k])


def trace_one_project(a: np.ndarray, r: int | None = None) -> np.ndarray:
    """Frobenius projection onto unit-trace PSD matrices of rank <= r (water-filling)."""
    vals, vecs = eig_hermitian(hermitian_part(a))
    r = vals.size if r is None else r
    lam = water_filling_shift(vals, r)
    kept = np.clip(vals[:r] - lam, 0.0, None)
    kept = kept / kept.sum()
    u = vecs[:, :r]
    return (u * kept) @ u.conj().T


def gauge_normalize(rho: np.ndarray, xi: CalibrationVector) -> tuple[np.ndarray, CalibrationVector]:
    """Move the trace of the state into the calibration vector: (rho/t, t xi)."""
    t = float(np.trace(rho).real)
    if t <= _ZERO_TRACE:
        raise ZeroDivisionError("state has zero trace")
    return rho / t, xi.with_values(xi.values * t)


def project_xi(xi: CalibrationVector) -> CalibrationVector:
    """Box projection onto the allowed coefficient ranges."""
    return xi.with_values(np.clip(xi.values, xi.lower, xi.upper))


def step_width(linear_map, direction) -> float:
    """||d||^2 / ||L(d)||^2, the exact line-search step for a least-squares gradient direction."""
    d = np.asarray(direction)
    num = float(np.vdot(d, d).real)
    image = np.asarray(linear_map(d))
    den = float(np.vdot(image, image).real)
    if den == 0.0:
        raise ExactFit("direction lies in the kernel of the map")
    return num / den


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _data(mmap: MeasurementMap, y) -> np.ndarray:
    vals = y.for_map(mmap) if isinstance(y, DataVector) else np.asarray(y, dtype=float)
    if vals.shape != (mmap.m,):
        raise ValueError(f"data has length {vals.shape}, map has {mmap.m} rows")
    return vals


class _StateOperator:
    """A_xi restricted to states, cached for a fixed xi."""

    def __init__(self, mmap: MeasurementMap, xi_values: np.ndarray):
        self.dim = mmap.dim
        self.mat = mmap.state_matrix(xi_values)
        self.mat_t = np.ascontiguousarray(self.mat.T)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return (self.mat @ rho.T.ravel()).real

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        """sum_i v_i N_i(xi)."""
        return hermitian_part((self.mat_t @ v).reshape(self.dim, self.dim))


def _initial_point(mmap, config, anticipated: CalibrationVector, target_psi, rng):
    r = config.rank_for(mmap.dim)
    vals = anticipated.values * (1.0 + rng.uniform(-config.init_xi_region, config.init_xi_region,
                                                    size=anticipated.values.size))
    xi = project_xi(anticipated.with_values(vals))
    dim = mmap.dim
    if target_psi is None:
        psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    else:
        psi = np.asarray(target_psi, dtype=complex).copy()
        w = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        psi = psi + config.init_rho_region * rng.uniform() * w / np.linalg.norm(w)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    if r > 1 and target_psi is None:
        rho = np.eye(dim) / dim
    return rho, xi


def _relative_residual(y, pred, ynorm) -> float:
    return float(np.linalg.norm(y - pred) / ynorm)


def _run_blind(mmap: MeasurementMap, y: np.ndarray, config: SolverConfig, rho, xi) -> SolverResult:
    r = config.rank_for(mmap.dim)
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        raise ValueError("data vector is zero")
    history: list[float] = []
    stop = "max_iters"
    prev = np.inf
    it = 0
    for it in range(1, config.max_iters + 1):
        # state step
        a_xi = _StateOperator(mmap, xi.values)
        res = y - a_xi(rho)
        grad = tangent_project(a_xi.adjoint(res), rho, r)
        try:
            mu = step_width(a_xi, grad)
        except ExactFit:
            mu = 0.0
        rho_step = rho + mu * grad
        if config.normalization == "project":
            rho = trace_one_project(rho_step, r)
        else:
            if config.allow_sign_flip:
                rho_r, sign = signed_psd_rank_project(rho_step, r)
                if sign < 0:
                    xi = xi.with_values(-xi.values)
            else:
                rho_r = psd_rank_project(rho_step, r)
            if np.trace(rho_r).real <= _ZERO_TRACE:
                raise ZeroDivisionError("rank projection returned a zero-trace state")
            if config.normalization == "trace":
                rho, xi = gauge_normalize(rho_r, xi)
            else:
                rho = rho_r
        # calibration step
        a_rho = mmap.coefficient_matrix(rho)
        res = y - a_rho @ xi.values
        g = a_rho.T @ res
        try:
            nu = step_width(lambda d: a_rho @ d, g)
        except ExactFit:
            nu = 0.0
        xi = project_xi(xi.with_values(xi.values + nu * g))
        rel = _relative_residual(y, a_rho @ xi.values, ynorm)
        if not np.isfinite(rel):
            raise SolverError(f"non-finite objective at iteration {it}")
        history.append(rel)
        if rel <= config.epsilon:
            stop = "epsilon"
            break
        if abs(prev - rel) <= config.stall_tol * max(rel, 1e-300):
            stop = "stalled"
            break
        prev = rel
    if config.normalization != "trace":
        t = float(np.trace(rho).real)
        if t <= _ZERO_TRACE:
            raise ZeroDivisionError("final state has zero trace")
        rho, xi = rho / t, project_xi(xi.with_values(xi.values * t))
    return SolverResult(rho, xi, tuple(history), it, stop in ("epsilon", "stalled"), stop)


def blind_calibrate(mmap: MeasurementMap, data, config: SolverConfig | None = None,
                    anticipated_xi: CalibrationVector | None = None, target_psi=None,
                    seed: int = 0) -> SolverResult:
    """Jointly estimate a rank-r state and calibration vector from data.

    Runs ``config.restarts`` random initializations around (anticipated_xi,
    target_psi) and returns the one with the smallest final residual.
    """
    config = config or SolverConfig()
    if config.mode != BLIND:
        config = replace(config, mode=BLIND)
    y = _data(mmap, data)
    anticipated = anticipated_xi or CalibrationVector.ideal(mmap.spec)
    if anticipated.values.size != mmap.num_coefficients:
        raise ValueError("anticipated calibration vector does not match the map")
    best = None
    for restart in range(config.restarts):
        sub = derive_seed(seed, restart)
        for attempt in range(_MAX_ZERO_TRACE_RESTARTS + 1):
            rng = np.random.default_rng(derive_seed(sub, attempt))
            rho0, xi0 = _initial_point(mmap, config, anticipated, target_psi, rng)
            try:
                result = _run_blind(mmap, y, config, rho0, xi0)
                break
            except ZeroDivisionError:
                log.warning("zero-trace projection, re-initializing (attempt %d)", attempt + 1)
        else:
            raise SolverError("repeated zero-trace projections")
        if best is None or result.residual < best.residual:
            best = replace(result, seed=sub)
    return replace(best, seed=seed)


def calibrated_tomography(mmap: MeasurementMap, data, xi_fixed, config: SolverConfig | None = None,
                          rho0=None) -> np.ndarray:
    """Least-squares state estimate for a fixed calibration vector.

    Projected gradient descent at rank ``config.rank`` (full rank by
    default), finished with the water-filling projection onto states.
    """
    config = config or TOMOGRAPHY_CONFIG
    y = _data(mmap, data)
    xi_vals = xi_fixed.values if isinstance(xi_fixed, CalibrationVector) else np.asarray(xi_fixed, dtype=float)
    dim = mmap.dim
    r = config.rank_for(dim)
    a_xi = _StateOperator(mmap, xi_vals)
    ynorm = np.linalg.norm(y)
    rho = np.eye(dim, dtype=complex) / dim if rho0 is None else np.asarray(rho0, dtype=complex)
    prev = np.inf
    for it in range(config.max_iters):
        res = y - a_xi(rho)
        rel = float(np.linalg.norm(res) / ynorm)
        if not np.isfinite(rel):
            raise SolverError(f"non-finite objective at iteration {it}")
        if rel <= config.epsilon or abs(prev - rel) <= config.stall_tol * max(rel, 1e-300):
            break
        prev = rel
        grad = tangent_project(a_xi.adjoint(res), rho, r)
        try:
            mu = step_width(a_xi, grad)
        except ExactFit:
            break
        step = rho + mu * grad
        if config.normalization == "project":
            rho = trace_one_project(step, r)
        else:
            rho = psd_rank_project(step, r)
            t = np.trace(rho).real
            if config.normalization == "trace" and t > _ZERO_TRACE:
                rho = rho / t
    return trace_one_project(rho, r)
