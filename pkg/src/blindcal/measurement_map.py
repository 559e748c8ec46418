"""The bilinear measurement map y_i = sum_j xi_j tr[N_ij rho] and its data format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .error_models import IDEAL, CalibrationVector, ErrorModelSpec, readout_generators, rotation_projector_derivatives
from .operators import basis_projector, bitstrings, outcome_signs, pauli_bases

PROJECTIVE = "projective"
EXPECTATION = "expectation"


def row_labels(n: int) -> list[tuple[str, str]]:
    """(basis, outcome) pairs in row order: bases lexicographic over X<Y<Z, then outcomes."""
    return [(p, b) for p in pauli_bases(n) for b in bitstrings(n)]


@dataclass(frozen=True, eq=False)
class MeasurementMap:
    """Materialized operators N_ij, shape (m, k+1, D, D)."""

    spec: ErrorModelSpec
    mode: str
    labels: tuple
    operators: np.ndarray = field(repr=False)

    def __post_init__(self):
        ops = np.ascontiguousarray(self.operators)
        ops.setflags(write=False)
        object.__setattr__(self, "operators", ops)
        m, kk, d, _ = ops.shape
        # tr[N rho] = sum_ab N_ab rho_ba, so contract against rho.T
        flat = ops.reshape(m, kk, d * d)
        object.__setattr__(self, "_flat", flat)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def dim(self) -> int:
        return self.operators.shape[-1]

    @property
    def m(self) -> int:
        return self.operators.shape[0]

    @property
    def num_coefficients(self) -> int:
        return self.operators.shape[1]

    @property
    def bases(self) -> tuple[str, ...]:
        return pauli_bases(self.n)

    def _xi(self, xi) -> np.ndarray:
        vals = xi.values if isinstance(xi, CalibrationVector) else np.asarray(xi, dtype=float)
        if vals.shape != (self.num_coefficients,):
            raise ValueError(f"calibration vector has shape {vals.shape}, expected ({self.num_coefficients},)")
        return vals

    def _rho(self, rho) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"state has shape {rho.shape}, expected {(self.dim, self.dim)}")
        return rho

    def state_matrix(self, xi) -> np.ndarray:
        """A_xi as an (m, D*D) complex matrix acting on rho.T.ravel()."""
        return np.tensordot(self._flat, self._xi(xi), axes=([1], [0]))

    def coefficient_matrix(self, rho) -> np.ndarray:
        """A_rho as a real (m, k+1) matrix: entries tr[N_ij rho]."""
        vec = self._rho(rho).T.ravel()
        return (self._flat @ vec).real

    def apply(self, xi, rho) -> np.ndarray:
        return self.coefficient_matrix(rho) @ self._xi(xi)

    def adjoint_state(self, xi, residual) -> np.ndarray:
        """sum_i v_i sum_j xi_j N_ij, a Hermitian operator."""
        v = self._residual(residual)
        op = np.tensordot(v, self.operators, axes=([0], [0]))
        return np.tensordot(self._xi(xi), op, axes=([0], [0]))

    def adjoint_xi(self, rho, residual) -> np.ndarray:
        return self.coefficient_matrix(rho).T @ self._residual(residual)

    def _residual(self, residual) -> np.ndarray:
        v = np.asarray(residual, dtype=float)
        if v.shape != (self.m,):
            raise ValueError(f"vector has length {v.shape}, expected {self.m}")
        return v

    def objective(self, xi, rho, data) -> float:
        r = np.asarray(data) - self.apply(xi, rho)
        return 0.5 * float(r @ r)


def build_map(spec: ErrorModelSpec, mode: str = PROJECTIVE) -> MeasurementMap:
    """Assemble N_ij for every (basis, outcome) row and coefficient of ``spec``.

    Rotation coefficients contribute the exact derivative of the effective
    projector; readout coefficients act on outcome labels through the
    first-order stochastic generators applied to the ideal projectors.
    """
    if mode not in (PROJECTIVE, EXPECTATION):
        raise ValueError(f"unknown mode {mode!r}")
    n, dim = spec.n, spec.dim
    names = spec.coefficient_names
    gens = readout_generators(n)
    ops = np.zeros((3**n * dim, len(names), dim, dim), dtype=complex)
    outcomes = bitstrings(n)
    for bi, p in enumerate(pauli_bases(n)):
        ideal = np.array([basis_projector(p, b) for b in outcomes])
        rot = rotation_projector_derivatives(spec, p)
        rows = slice(bi * dim, (bi + 1) * dim)
        ops[rows, 0] = ideal
        for j, name in enumerate(names[1:], start=1):
            if name in rot:
                ops[rows, j] = rot[name]
            else:
                ops[rows, j] = np.tensordot(gens[name], ideal, axes=([1], [0]))
    mmap = MeasurementMap(spec, PROJECTIVE, tuple(row_labels(n)), ops)
    return to_expectation_mode(mmap) if mode == EXPECTATION else mmap


def to_expectation_mode(mmap: MeasurementMap) -> MeasurementMap:
    """Collapse each basis to the signed sum over its outcomes (one Pauli row per basis)."""
    if mmap.mode != PROJECTIVE:
        raise ValueError("expected a projective-mode map")
    dim = mmap.dim
    signs = outcome_signs(mmap.n)
    ops = mmap.operators.reshape(3**mmap.n, dim, *mmap.operators.shape[1:])
    exp_ops = np.tensordot(signs, ops, axes=([0], [1]))
    return MeasurementMap(mmap.spec, EXPECTATION, tuple((p,) for p in mmap.bases), exp_ops)


# ---------------------------------------------------------------------------
# data vectors
# ---------------------------------------------------------------------------

class DataFormatError(ValueError):
    """Raised for malformed DataVector documents."""


@dataclass(frozen=True, eq=False)
class DataVector:
    """Empirical outcome frequencies in map row order.

    ``shots_per_basis`` of 0 marks exact probabilities (no sampling).
    """

    n: int
    values: np.ndarray
    shots_per_basis: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        shots = np.broadcast_to(np.asarray(self.shots_per_basis, dtype=int), (3**self.n,)).copy()
        dim = 2**self.n
        if vals.shape != (3**self.n * dim,):
            raise DataFormatError(f"expected {3**self.n * dim} values, got {vals.shape}")
        vals.setflags(write=False)
        shots.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "shots_per_basis", shots)

    @property
    def per_basis(self) -> np.ndarray:
        return self.values.reshape(3**self.n, 2**self.n)

    def counts(self) -> np.ndarray:
        return np.rint(self.per_basis * self.shots_per_basis[:, None]).astype(int)

    @classmethod
    def from_counts(cls, n: int, counts) -> "DataVector":
        counts = np.asarray(counts, dtype=int).reshape(3**n, 2**n)
        shots = counts.sum(axis=1)
        if np.any(shots <= 0):
            raise DataFormatError("every basis needs at least one shot")
        return cls(n, (counts / shots[:, None]).ravel(), shots)

    def expectation_values(self) -> np.ndarray:
        """Per-basis signed sums, the data of an expectation-mode map."""
        return self.per_basis @ outcome_signs(self.n)

    def for_map(self, mmap: MeasurementMap) -> np.ndarray:
        if mmap.n != self.n:
            raise ValueError("data and map disagree on n")
        return self.values if mmap.mode == PROJECTIVE else self.expectation_values()

    def to_json(self) -> dict:
        exact = bool(np.all(self.shots_per_basis == 0))
        shots = self.shots_per_basis
        out = {"n": self.n, "shots_per_basis": int(shots[0]) if np.all(shots == shots[0]) else None,
               "bases": []}
        outcomes = bitstrings(self.n)
        counts = None if exact else self.counts()
        for bi, p in enumerate(pauli_bases(self.n)):
            entry = {"basis": p}
            if exact:
                entry["probabilities"] = {b: float(v) for b, v in zip(outcomes, self.per_basis[bi])}
            else:
                entry["counts"] = {b: int(c) for b, c in zip(outcomes, counts[bi]) if c}
                if out["shots_per_basis"] is None:
                    entry["shots"] = int(shots[bi])
            out["bases"].append(entry)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, doc) -> "DataVector":
        if isinstance(doc, str):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"not valid JSON: {exc}") from exc
        try:
            n = int(doc["n"])
            default_shots = doc.get("shots_per_basis")
            entries = {e["basis"]: e for e in doc["bases"]}
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed data document: {exc!r}") from exc
        if n < 1:
            raise DataFormatError("n must be >= 1")
        bases, outcomes = pauli_bases(n), bitstrings(n)
        if set(entries) != set(bases):
            raise DataFormatError(f"data must contain exactly the {3**n} full-weight Pauli bases")
        values = np.zeros((3**n, 2**n))
        shots = np.zeros(3**n, dtype=int)
        for bi, p in enumerate(bases):
            e = entries[p]
            if "probabilities" in e:
                probs = e["probabilities"]
                _check_outcomes(probs, outcomes)
                values[bi] = [float(probs.get(b, 0.0)) for b in outcomes]
                if abs(values[bi].sum() - 1.0) > 1e-9 or np.any(values[bi] < -1e-12):
                    raise DataFormatError(f"probabilities for basis {p} are not normalized")
                continue
            counts = e.get("counts")
            if not isinstance(counts, dict):
                raise DataFormatError(f"basis {p} has no counts")
            _check_outcomes(counts, outcomes)
            c = np.array([counts.get(b, 0) for b in outcomes])
            if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
                raise DataFormatError(f"counts for basis {p} must be nonnegative integers")
            total = int(e.get("shots", default_shots if default_shots is not None else c.sum()))
            if total <= 0 or c.sum() != total:
                raise DataFormatError(f"counts for basis {p} sum to {c.sum()}, expected {total}")
            values[bi] = c / total
            shots[bi] = total
        return cls(n, values.ravel(), shots)


def _check_outcomes(mapping: dict, outcomes) -> None:
    bad = set(mapping) - set(outcomes)
    if bad:
        raise DataFormatError(f"unknown outcomes {sorted(bad)}")
