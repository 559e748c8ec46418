"""Ground-truth data generation.

The exact miscalibrated channel here is the verification oracle: benchmark
data always comes from it, never from the linearized measurement map.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .error_models import (ErrorModelSpec, PhysicalParams, measurement_unitary, readout_stochastic_matrix,
                           zeta_to_xi)
from .measurement_map import DataVector, build_map
from .operators import PAULI_MATRICES, kron_all, pauli_bases

PRODUCT, GHZ, RANDOM_DEEP = "product", "ghz", "random_deep"

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit sub-seed for (seed, key...) via numpy's SeedSequence hashing."""
    ss = np.random.SeedSequence([int(seed), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _normalize_angles(theta: float, phi: float) -> tuple[float, float]:
    """Map (theta, phi) with theta in [0, 2] onto theta in [0, 1]; same state up to a global phase."""
    if not 0.0 <= theta <= 2.0:
        raise ValueError(f"polar angle {theta} (units of pi) outside [0, 2]")
    if theta > 1.0:
        theta, phi = 2.0 - theta, phi + 1.0
    return theta, phi % 2.0


@dataclass(frozen=True)
class CircuitSpec:
    """State preparation: per-qubit Bloch angles in units of pi, then optional XX couplings.

    ``chi`` lists the entangling angle (radians) for each pair in the order
    (1,2), (1,3), (2,3), ...; only used by ``random_deep``.
    """

    kind: str
    angles: tuple[tuple[float, float], ...] = ()
    chi: tuple[float, ...] = ()
    n: int = 0

    def __post_init__(self):
        if self.kind not in (PRODUCT, GHZ, RANDOM_DEEP):
            raise ValueError(f"unknown circuit kind {self.kind!r}")
        angles = tuple(_normalize_angles(float(t), float(p)) for t, p in self.angles)
        n = self.n or len(angles)
        if n < 1:
            raise ValueError("circuit needs at least one qubit")
        if self.kind != GHZ and len(angles) != n:
            raise ValueError("need one (theta, phi) pair per qubit")
        npairs = n * (n - 1) // 2
        chi = tuple(float(c) for c in self.chi)
        if self.kind == RANDOM_DEEP:
            chi = chi or (math.pi / 4,) * npairs
            if len(chi) != npairs:
                raise ValueError(f"need {npairs} entangling angles")
            if any(not 0.0 <= c <= math.pi / 4 + 1e-12 for c in chi):
                raise ValueError("entangling angles must lie in [0, pi/4]")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "n", n)

    @classmethod
    def product(cls, *flat_angles: float) -> "CircuitSpec":
        """Product state from (theta_1, phi_1, theta_2, phi_2, ...) in units of pi."""
        if len(flat_angles) % 2:
            raise ValueError("angles come in (theta, phi) pairs")
        pairs = tuple(zip(flat_angles[::2], flat_angles[1::2]))
        return cls(PRODUCT, pairs)

    @classmethod
    def ghz(cls, n: int = 3) -> "CircuitSpec":
        return cls(GHZ, n=n)

    def to_json(self) -> dict:
        return {"kind": self.kind, "n": self.n, "angles": [list(a) for a in self.angles], "chi": list(self.chi)}

    @classmethod
    def from_json(cls, doc: dict) -> "CircuitSpec":
        if "name" in doc:
            return NAMED_STATES[doc["name"]]
        return cls(doc["kind"], tuple(tuple(a) for a in doc.get("angles", ())),
                   tuple(doc.get("chi", ())), int(doc.get("n", 0)))


@dataclass(frozen=True)
class NoiseSpec:
    """Single-qubit Pauli channel after every gate: X, Y, Z each with probability p/3."""

    pauli_noise_per_gate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.pauli_noise_per_gate <= 1.0:
            raise ValueError("Pauli noise probability must lie in [0, 1]")


NAMED_STATES: dict[str, CircuitSpec] = {
    "OS1": CircuitSpec.product(0.910, 1.978, 0.475, 0.378, 0.467, 0.480),
    "OS2": CircuitSpec.product(0.463, 0.846, 0.742, 1.618, 0.530, 0.726),
    "OS3": CircuitSpec.product(0.0316, 0.259, 0.374, 1.820, 0.372, 0.795),
    "OS4": CircuitSpec.product(0.993, 1.954, 0.494, 0.999, 0.0767, 1.521),
    "OS5": CircuitSpec.product(0.870, 1.967, 0.406, 1.012, 0.426, 0.548),
    "OS6": CircuitSpec.product(0.352, 1.380, 0.707, 0.243, 0.448, 0.219),
    "000": CircuitSpec.product(0, 0, 0, 0, 0, 0),
    "+++": CircuitSpec.product(0.5, 0, 0.5, 0, 0.5, 0),
    "RP1": CircuitSpec.product(0.871, 1.427, 0.713, 1.190, 0.693, 1.477),
    "RP2": CircuitSpec.product(0.723, 1.198, 0.924, 1.533, 0.871, 0.485),
    "RP3": CircuitSpec.product(0.736, 0.559, 0.654, 0.422, 0.783, 1.211),
    "RP4": CircuitSpec.product(0.957, 0.105, 0.942, 0.270, 0.704, 0.773),
    "GHZ": CircuitSpec.ghz(3),
    "RD1": CircuitSpec(RANDOM_DEEP, ((0.872, 0.426), (0.714, 0.190), (0.693, 0.477))),
    "RD2": CircuitSpec(RANDOM_DEEP, ((0.722, 0.198), (0.923, 1.533), (0.871, 0.485))),
}
PROBE_STATES = tuple(f"OS{i}" for i in range(1, 7))

# Random product state in the X-Z plane used for injected-error recovery.
INJECTION_STATE = CircuitSpec.product(1.237, 0.0, 0.670, 0.0, 1.823, 0.0)


def bloch_unitary(theta: float, phi: float) -> np.ndarray:
    """Single-qubit gate mapping |0> to cos(theta pi/2)|0> + e^{i phi pi} sin(theta pi/2)|1>."""
    t, p = theta * math.pi / 2, phi * math.pi
    return np.array([[math.cos(t), -np.exp(-1j * p) * math.sin(t)],
                     [np.exp(1j * p) * math.sin(t), math.cos(t)]], dtype=complex)


def _embed(n: int, ops: dict[int, np.ndarray]) -> np.ndarray:
    return kron_all([ops.get(q, PAULI_MATRICES["I"]) for q in range(n)])


def _xx_gate(n: int, i: int, j: int, chi: float) -> np.ndarray:
    xx = _embed(n, {i: PAULI_MATRICES["X"], j: PAULI_MATRICES["X"]})
    return math.cos(chi) * np.eye(2**n) - 1j * math.sin(chi) * xx


def _cnot(n: int, control: int, target: int) -> np.ndarray:
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    return _embed(n, {control: p0}) + _embed(n, {control: p1, target: PAULI_MATRICES["X"]})


def circuit_gates(c: CircuitSpec) -> list[tuple[np.ndarray, tuple[int, ...]]]:
    """(unitary on all qubits, qubits it touches) in application order."""
    n = c.n
    gates = []
    if c.kind == GHZ:
        gates.append((_embed(n, {0: _H}), (0,)))
        for q in range(n - 1):
            gates.append((_cnot(n, q, q + 1), (q, q + 1)))
        return gates
    for q, (theta, phi) in enumerate(c.angles):
        gates.append((_embed(n, {q: bloch_unitary(theta, phi)}), (q,)))
    if c.kind == RANDOM_DEEP:
        for (i, j), chi in zip(combinations(range(n), 2), c.chi):
            gates.append((_xx_gate(n, i, j, chi), (i, j)))
    return gates


def pauli_channel(rho: np.ndarray, qubit: int, p: float) -> np.ndarray:
    n = int(round(math.log2(rho.shape[0])))
    out = (1.0 - p) * rho
    for name in "XYZ":
        op = _embed(n, {qubit: PAULI_MATRICES[name]})
        out = out + (p / 3.0) * (op @ rho @ op)
    return out


def prepare_state(c: CircuitSpec, noise: NoiseSpec | None = None) -> np.ndarray:
    """Density matrix produced by the circuit; with noise, Pauli channels follow each gate."""
    p = 0.0 if noise is None else noise.pauli_noise_per_gate
    dim = 2**c.n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    for u, qubits in circuit_gates(c):
        rho = u @ rho @ u.conj().T
        if p > 0:
            for q in qubits:
                rho = pauli_channel(rho, q, p)
    return 0.5 * (rho + rho.conj().T)


def target_state(c: CircuitSpec) -> np.ndarray:
    """Ideal pure state vector of the circuit."""
    psi = np.zeros(2**c.n, dtype=complex)
    psi[0] = 1.0
    for u, _ in circuit_gates(c):
        psi = u @ psi
    return psi


def exact_readout_matrix(n: int, zeta: PhysicalParams) -> np.ndarray:
    spec = ErrorModelSpec(n, ("dark_bright", "spillover"))
    return readout_stochastic_matrix(spec, zeta, linear=False)


def exact_channel_probabilities(zeta: PhysicalParams, rho: np.ndarray) -> np.ndarray:
    """Outcome probabilities in map row order under the exact miscalibrated measurement."""
    rho = np.asarray(rho)
    n = int(round(math.log2(rho.shape[0])))
    atoms = zeta.rotation_atoms()
    s = exact_readout_matrix(n, zeta)
    out = []
    for p in pauli_bases(n):
        u = measurement_unitary(p, atoms)
        born = np.real(np.einsum("ab,bc,ac->a", u, rho, u.conj()))
        out.append(s @ born)
    return np.concatenate(out)


def first_order_probabilities(spec: ErrorModelSpec, zeta: PhysicalParams, rho: np.ndarray) -> np.ndarray:
    """Probabilities predicted by the linearized model of ``spec``."""
    return build_map(spec).apply(zeta_to_xi(spec, zeta), rho)


def sample_counts(probabilities, shots_per_basis: int, seed: int | None = None, n: int | None = None) -> DataVector:
    """Independent multinomial draws per basis; ``shots_per_basis == 0`` returns exact data."""
    probs = np.asarray(probabilities, dtype=float)
    if n is None:
        # m = 6^n
        n = int(round(math.log(probs.size, 6)))
    per_basis = probs.reshape(3**n, 2**n).copy()
    if np.any(per_basis < -1e-9):
        raise ValueError("negative probabilities")
    per_basis = np.clip(per_basis, 0.0, None)
    sums = per_basis.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        warnings.warn(f"renormalizing probabilities (max deviation {np.abs(sums - 1).max():.2e})", stacklevel=2)
    per_basis /= sums[:, None]
    if shots_per_basis == 0:
        return DataVector(n, per_basis.ravel(), 0)
    if shots_per_basis < 0:
        raise ValueError("shots must be nonnegative")
    rng = np.random.default_rng(seed)
    counts = np.array([rng.multinomial(shots_per_basis, row) for row in per_basis])
    return DataVector.from_counts(n, counts)


def inject_miscalibration(base: PhysicalParams, extra_or: float, extra_ct: float) -> PhysicalParams:
    """Add over-rotation and symmetric nearest-neighbour crosstalk on top of ``base``."""
    for name, v in (("extra_or", extra_or), ("extra_ct", extra_ct)):
        if not 0.0 <= v <= 0.1:
            raise ValueError(f"{name}={v} outside [0, 0.1]")
    return replace(base, xi_or=base.xi_or + extra_or, xi_l=base.xi_l + extra_ct, xi_r=base.xi_r + extra_ct)


@dataclass(frozen=True)
class Experiment:
    """A simulated tomography run: what was prepared and how it was measured."""

    circuit: CircuitSpec
    zeta: PhysicalParams = field(default_factory=PhysicalParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def prepared(self) -> np.ndarray:
        return prepare_state(self.circuit, self.noise)

    def probabilities(self) -> np.ndarray:
        return exact_channel_probabilities(self.zeta, self.prepared())

    def sample(self, shots: int, seed: int | None) -> DataVector:
        return sample_counts(self.probabilities(), shots, seed, n=self.circuit.n)
