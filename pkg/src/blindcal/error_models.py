"""Physical error parameters, linear calibration coefficients and their transforms.

Two parameterizations are used throughout:

* ``PhysicalParams`` holds the raw device quantities (probabilities, rotation
  fractions in units of pi/2, crosstalk phases in radians).
* ``CalibrationVector`` holds the coefficients that enter the bilinear
  measurement model linearly. Entry 0 weights the ideal measurement.

Rotation errors are modelled by the exact pre-measurement unitary. A pulse on
qubit q rotates q by pi/2 (plus the over-rotation) and leaks a rotation of
``xi * pi/2`` onto its neighbours, about the target axis shifted by the
crosstalk phase. Every pulse is a tensor product, so the full unitary factors
into one 2x2 matrix per qubit; derivatives are taken exactly on these factors.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache

import numpy as np

from .operators import PAULI_MATRICES, bitstrings, kron_all, outcome_signs, pauli_operator

_I2 = PAULI_MATRICES["I"]
_X = PAULI_MATRICES["X"]
_Y = PAULI_MATRICES["Y"]
_Z = PAULI_MATRICES["Z"]

IDEAL = "ideal"

ERROR_TYPES = (
    "over_rotation",
    "dark_bright",
    "spillover",
    "crosstalk_symmetric",
    "crosstalk_asymmetric",
    "crosstalk_phase",
    "crosstalk_nnn",
)

# Cumulative model sizes, smallest first: 2, 4, 5, 6, 7, 9, 13 error coefficients.
NESTED_ERROR_LEVELS = (
    ("dark_bright",),
    ("dark_bright", "spillover"),
    ("dark_bright", "spillover", "over_rotation"),
    ("dark_bright", "spillover", "over_rotation", "crosstalk_symmetric"),
    ("dark_bright", "spillover", "over_rotation", "crosstalk_symmetric", "crosstalk_asymmetric"),
    ("dark_bright", "spillover", "over_rotation", "crosstalk_symmetric", "crosstalk_asymmetric",
     "crosstalk_phase"),
    ("dark_bright", "spillover", "over_rotation", "crosstalk_symmetric", "crosstalk_asymmetric",
     "crosstalk_phase", "crosstalk_nnn"),
)

NINE_PARAMETER_ERRORS = (
    "over_rotation", "dark_bright", "spillover",
    "crosstalk_symmetric", "crosstalk_asymmetric", "crosstalk_phase",
)

# Elementary rotation directions: offset of the affected qubit from the target.
_CROSSTALK_OFFSETS = {"l": -1, "r": +1, "nnl": -2, "nnr": +2}

READOUT_COEFFS = ("p0", "p1", "p_left", "p_right")

XI0_RANGE = (0.5, 1.5)
PROBABILITY_RANGE = (0.0, 1.0)
ROTATION_RANGE = (-1.0, 1.0)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalParams:
    """Raw device error parameters.

    Rotation magnitudes are fractions of pi/2, phases are radians and are
    reduced into [0, 2 pi) on construction.
    """

    xi_or: float = 0.0
    p0: float = 0.0
    p1: float = 0.0
    p_left: float = 0.0
    p_right: float = 0.0
    xi_l: float = 0.0
    xi_r: float = 0.0
    phi_l: float = 0.0
    phi_r: float = 0.0
    xi_nnl: float = 0.0
    xi_nnr: float = 0.0
    phi_nnl: float = 0.0
    phi_nnr: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise ValueError(f"{f.name} is not finite")
            if f.name.startswith("phi"):
                value = math.fmod(value, TWO_PI)
                if value < 0:
                    value += TWO_PI
                if value >= TWO_PI:
                    value = 0.0
            elif f.name.startswith("p"):
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"probability {f.name}={value} outside [0, 1]")
            elif not -1.0 <= value <= 1.0:
                raise ValueError(f"rotation fraction {f.name}={value} outside [-1, 1]")
            object.__setattr__(self, f.name, value)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown physical parameters: {sorted(unknown)}")
        return cls(**data)

    def scaled(self, s: float) -> "PhysicalParams":
        """Scale every magnitude by ``s``; phases are left alone."""
        return replace(self, **{f.name: s * getattr(self, f.name)
                                for f in fields(self) if not f.name.startswith("phi")})

    def rotation_atoms(self) -> dict[str, float]:
        atoms = {"or": self.xi_or}
        for d in _CROSSTALK_OFFSETS:
            mag, phi = getattr(self, f"xi_{d}"), getattr(self, f"phi_{d}")
            atoms[f"{d}_cos"] = mag * math.cos(phi)
            atoms[f"{d}_sin"] = mag * math.sin(phi)
        return atoms


# Values used for all numerical benchmarks.
XI_ACTUAL = PhysicalParams(
    xi_or=0.01, p0=0.0032, p1=0.01541, p_left=0.0017, p_right=0.0041,
    xi_l=0.0256, xi_r=0.0118, phi_l=math.pi / 4, phi_r=math.pi / 8,
)


def _coefficient_layout(errors: frozenset) -> list[tuple[str, dict[str, float]]]:
    """(coefficient name, {rotation atom: weight} or {} for readout) in canonical order."""
    layout: list[tuple[str, dict[str, float]]] = []
    if "over_rotation" in errors:
        layout.append(("xi_or", {"or": 1.0}))
    if "dark_bright" in errors:
        layout += [("p0", {}), ("p1", {})]
    if "spillover" in errors:
        layout += [("p_left", {}), ("p_right", {})]
    if "crosstalk_phase" in errors:
        for d in ("l", "r"):
            layout += [(f"xi_{d}_cos", {f"{d}_cos": 1.0}), (f"xi_{d}_sin", {f"{d}_sin": 1.0})]
    elif "crosstalk_asymmetric" in errors:
        layout += [("xi_l", {"l_cos": 1.0}), ("xi_r", {"r_cos": 1.0})]
    elif "crosstalk_symmetric" in errors:
        layout.append(("xi_ct", {"l_cos": 1.0, "r_cos": 1.0}))
    if "crosstalk_nnn" in errors:
        for d in ("nnl", "nnr"):
            layout += [(f"xi_{d}_cos", {f"{d}_cos": 1.0}), (f"xi_{d}_sin", {f"{d}_sin": 1.0})]
    return layout


def _default_range(name: str) -> tuple[float, float]:
    if name == IDEAL:
        return XI0_RANGE
    if name in READOUT_COEFFS:
        return PROBABILITY_RANGE
    return ROTATION_RANGE


@dataclass(frozen=True)
class ErrorModelSpec:
    """Which error mechanisms the measurement model includes, for ``n`` qubits."""

    n: int
    errors: tuple[str, ...] = NINE_PARAMETER_ERRORS
    ranges: tuple[tuple[str, tuple[float, float]], ...] = ()

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        object.__setattr__(self, "n", int(self.n))
        errs = tuple(self.errors)
        unknown = set(errs) - set(ERROR_TYPES)
        if unknown:
            raise ValueError(f"unknown error types: {sorted(unknown)}")
        if len(set(errs)) != len(errs):
            raise ValueError("duplicate error types")
        if "crosstalk_phase" in errs and "crosstalk_asymmetric" not in errs:
            raise ValueError("crosstalk_phase requires crosstalk_asymmetric")
        if "crosstalk_asymmetric" in errs and "crosstalk_symmetric" not in errs:
            raise ValueError("crosstalk_asymmetric requires crosstalk_symmetric")
        object.__setattr__(self, "errors", errs)
        names = self.coefficient_names
        rng = dict(self.ranges)
        bad = set(rng) - set(names)
        if bad:
            raise ValueError(f"ranges given for unknown coefficients: {sorted(bad)}")
        full = []
        for name in names:
            lo, hi = rng.get(name, _default_range(name))
            if not lo <= hi:
                raise ValueError(f"empty range for {name}")
            full.append((name, (float(lo), float(hi))))
        object.__setattr__(self, "ranges", tuple(full))

    @property
    def layout(self):
        return _coefficient_layout(frozenset(self.errors))

    @property
    def coefficient_names(self) -> tuple[str, ...]:
        return (IDEAL,) + tuple(name for name, _ in _coefficient_layout(frozenset(self.errors)))

    @property
    def k(self) -> int:
        """Number of error coefficients (excluding the ideal one)."""
        return len(self.coefficient_names) - 1

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for _, (lo, _) in self.ranges])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, (_, hi) in self.ranges])

    @property
    def param_to_coeff(self) -> dict[str, list[int]]:
        """Physical parameter name -> indices of the coefficients it feeds."""
        names = self.coefficient_names
        out: dict[str, list[int]] = {}
        for idx, name in enumerate(names[1:], start=1):
            if name in READOUT_COEFFS:
                params = [name]
            elif name == "xi_or":
                params = ["xi_or"]
            elif name == "xi_ct":
                params = ["xi_l", "xi_r"]
            else:
                d = name.split("_")[1]
                params = [f"xi_{d}"] + ([f"phi_{d}"] if name.endswith(("_cos", "_sin")) else [])
            for p in params:
                out.setdefault(p, []).append(idx)
        return out

    def with_errors(self, errors) -> "ErrorModelSpec":
        keep = dict(self.ranges)
        spec = ErrorModelSpec(self.n, tuple(errors))
        return ErrorModelSpec(self.n, spec.errors,
                              tuple((k, v) for k, v in keep.items() if k in spec.coefficient_names))

    def to_json(self) -> dict:
        return {"n": self.n, "errors": list(self.errors),
                "ranges": {name: list(bounds) for name, bounds in self.ranges}}

    @classmethod
    def from_json(cls, data) -> "ErrorModelSpec":
        if isinstance(data, str):
            data = json.loads(data)
        if not isinstance(data, dict) or "n" not in data or "errors" not in data:
            raise ValueError("error model JSON needs 'n' and 'errors'")
        ranges = tuple((k, tuple(v)) for k, v in data.get("ranges", {}).items())
        return cls(int(data["n"]), tuple(data["errors"]), ranges)


@dataclass(frozen=True)
class CalibrationVector:
    """Named linear calibration coefficients with their allowed box."""

    names: tuple[str, ...]
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if not (len(self.names) == vals.size == len(self.lower) == len(self.upper)):
            raise ValueError("names, values and bounds must have equal length")

    @classmethod
    def for_spec(cls, spec: ErrorModelSpec, values) -> "CalibrationVector":
        return cls(spec.coefficient_names, np.asarray(values, dtype=float), spec.lower, spec.upper)

    @classmethod
    def ideal(cls, spec: ErrorModelSpec) -> "CalibrationVector":
        vals = np.zeros(spec.k + 1)
        vals[0] = 1.0
        return cls.for_spec(spec, vals)

    def with_values(self, values) -> "CalibrationVector":
        return CalibrationVector(self.names, np.asarray(values, dtype=float), self.lower, self.upper)

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.values)}

    @property
    def errors(self) -> np.ndarray:
        return self.values[1:]

    def in_bounds(self) -> bool:
        return bool(np.all(self.values >= self.lower) and np.all(self.values <= self.upper))


def zeta_to_xi(spec: ErrorModelSpec, zeta: PhysicalParams) -> CalibrationVector:
    """Linear coefficients for physical parameters ``zeta`` under ``spec``.

    Models without a phase take the cosine component of each crosstalk term;
    the symmetric model takes the mean of the left and right cosine components.
    """
    atoms = zeta.rotation_atoms()
    values = [1.0]
    for name, weights in spec.layout:
        if name in READOUT_COEFFS:
            values.append(getattr(zeta, name))
        elif name == "xi_ct":
            values.append(0.5 * (atoms["l_cos"] + atoms["r_cos"]))
        else:
            (atom,) = weights
            values.append(atoms[atom])
    return CalibrationVector.for_spec(spec, values)


def xi_to_zeta(spec: ErrorModelSpec, xi: CalibrationVector) -> PhysicalParams:
    """Invert ``zeta_to_xi``; crosstalk magnitude and phase are polar coordinates."""
    named = xi.as_dict()
    out: dict[str, float] = {}
    for name in READOUT_COEFFS:
        if name in named:
            out[name] = min(max(named[name], 0.0), 1.0)
    if "xi_or" in named:
        out["xi_or"] = named["xi_or"]
    if "xi_ct" in named:
        out["xi_l"] = out["xi_r"] = named["xi_ct"]
    for d in _CROSSTALK_OFFSETS:
        if f"xi_{d}" in named:
            out[f"xi_{d}"] = named[f"xi_{d}"]
        if f"xi_{d}_cos" in named:
            c, s = named[f"xi_{d}_cos"], named[f"xi_{d}_sin"]
            out[f"xi_{d}"] = math.hypot(c, s)
            out[f"phi_{d}"] = math.atan2(s, c) if out[f"xi_{d}"] > 0 else 0.0
    for key in list(out):
        if key.startswith("xi"):
            out[key] = min(max(out[key], -1.0), 1.0)
    return PhysicalParams(**out)


# ---------------------------------------------------------------------------
# rotation errors
# ---------------------------------------------------------------------------

# Target pulse axis phase per basis letter: X uses R_y(-pi/2), Y uses R_x(pi/2).
_TARGET_PHASE = {"X": -math.pi / 2, "Y": 0.0}


def _axis(phase: float) -> np.ndarray:
    return math.cos(phase) * _X + math.sin(phase) * _Y


def _rotation(generator_angle: float, axis: np.ndarray) -> np.ndarray:
    """exp(-i a G) for a Pauli-normalized axis G (G^2 = 1)."""
    return math.cos(generator_angle) * _I2 - 1j * math.sin(generator_angle) * axis


def _crosstalk_rotation(c: float, s: float, target_phase: float) -> np.ndarray:
    # exp(-i pi/4 (c n_t + s n_perp).sigma): angle (c, s)-magnitude times pi/2
    gen = c * _axis(target_phase) + s * _axis(target_phase + math.pi / 2)
    mag = math.hypot(c, s)
    if mag == 0.0:
        return _I2.copy()
    return _rotation(math.pi / 4 * mag, gen / mag)


def _pulse_factors(basis: str, atoms: dict[str, float]) -> list[list[np.ndarray]]:
    """Per qubit, the single-qubit factors in time order (pulse on qubit 1 first)."""
    n = len(basis)
    factors: list[list[np.ndarray]] = [[] for _ in range(n)]
    for q, letter in enumerate(basis):
        if letter == "Z":
            continue
        phase = _TARGET_PHASE[letter]
        factors[q].append(_rotation(math.pi / 4 + math.pi / 2 * atoms.get("or", 0.0), _axis(phase)))
        for d, off in _CROSSTALK_OFFSETS.items():
            nb = q + off
            if 0 <= nb < n:
                c, s = atoms.get(f"{d}_cos", 0.0), atoms.get(f"{d}_sin", 0.0)
                if c or s:
                    factors[nb].append(_crosstalk_rotation(c, s, phase))
    return factors


def qubit_unitaries(basis: str, atoms: dict[str, float] | None = None) -> list[np.ndarray]:
    """Exact single-qubit factors u_k of the miscalibrated pre-measurement unitary."""
    atoms = atoms or {}
    out = []
    for fs in _pulse_factors(basis, atoms):
        u = _I2.copy()
        for f in fs:
            u = f @ u
        out.append(u)
    return out


def measurement_unitary(basis: str, atoms: dict[str, float] | None = None) -> np.ndarray:
    """Full pre-measurement unitary U; outcome b has effective projector U^dag |b><b| U."""
    return kron_all(qubit_unitaries(basis, atoms))


@lru_cache(maxsize=None)
def _qubit_unitary_derivatives(basis: str) -> tuple[tuple[np.ndarray, ...], dict]:
    """Ideal u_k and exact d u_k / d atom at zero error, keyed by (atom, qubit)."""
    n = len(basis)
    u0 = tuple(qubit_unitaries(basis))
    derivs: dict[tuple[str, int], np.ndarray] = {}
    for q, letter in enumerate(basis):
        if letter == "Z":
            continue
        phase = _TARGET_PHASE[letter]
        # d/dxi exp(-i(pi/4 + pi xi/2) G) = -i pi/2 G exp(...)
        d = -1j * math.pi / 2 * _axis(phase) @ u0[q]
        derivs[("or", q)] = derivs.get(("or", q), 0) + d
        for name, off in _CROSSTALK_OFFSETS.items():
            nb = q + off
            if not 0 <= nb < n:
                continue
            # crosstalk factor is the identity at zero; it sits between the
            # pulses already applied to nb and the ones still to come.
            before = _I2.copy()
            after = _I2.copy()
            if basis[nb] != "Z":
                if nb < q:
                    before = u0[nb]
                else:
                    after = u0[nb]
            for comp, ax in (("cos", _axis(phase)), ("sin", _axis(phase + math.pi / 2))):
                key = (f"{name}_{comp}", nb)
                derivs[key] = derivs.get(key, 0) + after @ (-1j * math.pi / 4 * ax) @ before
    for arr in u0:
        arr.setflags(write=False)
    return u0, derivs


def qubit_projectors(basis: str, atoms: dict[str, float] | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per qubit, the effective single-qubit projectors for outcome bits 0 and 1."""
    out = []
    for u in qubit_unitaries(basis, atoms):
        out.append(tuple(u.conj().T @ np.diag(e).astype(complex) @ u for e in ((1, 0), (0, 1))))
    return out


def effective_projectors(basis: str, atoms: dict[str, float] | None = None) -> np.ndarray:
    """Exact effective projectors for all 2^n outcomes, shape (2^n, D, D)."""
    per_qubit = qubit_projectors(basis, atoms)
    return np.array([kron_all([per_qubit[q][int(bit)] for q, bit in enumerate(b)])
                     for b in bitstrings(len(basis))])


@lru_cache(maxsize=None)
def projector_atom_derivatives(basis: str) -> dict[str, np.ndarray]:
    """Exact d Pi_b / d atom at zero error for every outcome, each of shape (2^n, D, D)."""
    n = len(basis)
    u0, derivs = _qubit_unitary_derivatives(basis)
    e = [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)]
    pi0 = [[u.conj().T @ e[bit] @ u for bit in (0, 1)] for u in u0]
    out: dict[str, np.ndarray] = {}
    atoms = sorted({a for a, _ in derivs})
    for atom in atoms:
        total = np.zeros((2**n, 2**n, 2**n), dtype=complex)
        for (a, q), du in derivs.items():
            if a != atom:
                continue
            dpi = [du.conj().T @ e[bit] @ u0[q] + u0[q].conj().T @ e[bit] @ du for bit in (0, 1)]
            for idx, b in enumerate(bitstrings(n)):
                mats = [pi0[k][int(bit)] for k, bit in enumerate(b)]
                mats[q] = dpi[int(b[q])]
                total[idx] += kron_all(mats)
        total.setflags(write=False)
        out[atom] = total
    return out


def rotation_projector_derivatives(spec: ErrorModelSpec, basis: str) -> dict[str, np.ndarray]:
    """d Pi_b / d xi_j for each rotation coefficient of ``spec``."""
    atom_derivs = projector_atom_derivatives(basis)
    dim = 2**spec.n
    out = {}
    for name, weights in spec.layout:
        if not weights:
            continue
        acc = np.zeros((dim, dim, dim), dtype=complex)
        for atom, w in weights.items():
            if atom in atom_derivs:
                acc = acc + w * atom_derivs[atom]
        out[name] = acc
    return out


def rotation_error_transform(spec: ErrorModelSpec, zeta: PhysicalParams, p: str) -> list[tuple[str, np.ndarray]]:
    """First-order expansion of the measured Pauli observable for basis ``p``.

    Returns ``[("ideal", M), (name, xi_name * dM/dxi_name), ...]`` for the
    rotation coefficients of ``spec`` with nonzero value, so that summing the
    operators gives the linearized miscalibrated observable.
    """
    if len(p) != spec.n:
        raise ValueError(f"basis {p!r} does not match n={spec.n}")
    xi = zeta_to_xi(spec, zeta).as_dict()
    signs = outcome_signs(spec.n)
    terms = [(IDEAL, pauli_operator(p))]
    for name, dpi in rotation_projector_derivatives(spec, p).items():
        if xi[name] != 0.0:
            terms.append((name, xi[name] * np.tensordot(signs, dpi, axes=1)))
    return terms


# ---------------------------------------------------------------------------
# readout errors
# ---------------------------------------------------------------------------

def _bits_array(n: int) -> np.ndarray:
    return np.array([[int(ch) for ch in b] for b in bitstrings(n)], dtype=int)


def _index(bits) -> int:
    out = 0
    for bit in bits:
        out = 2 * out + int(bit)
    return out


@lru_cache(maxsize=None)
def readout_generators(n: int) -> dict[str, np.ndarray]:
    """Derivative of the readout stochastic matrix w.r.t. each probability at zero.

    ``S[c, b]`` is the probability of reading ``c`` when the true outcome is
    ``b``; every generator has zero column sums.
    """
    dim = 2**n
    gens = {name: np.zeros((dim, dim)) for name in READOUT_COEFFS}
    for b, bits in enumerate(_bits_array(n)):
        for q in range(n):
            flipped = bits.copy()
            flipped[q] ^= 1
            name = "p0" if bits[q] == 0 else "p1"
            gens[name][_index(flipped), b] += 1.0
            gens[name][b, b] -= 1.0
        for q in range(n - 1):
            # bright left ion spills into the right detector, and vice versa
            if bits[q] == 1 and bits[q + 1] == 0:
                c = bits.copy()
                c[q + 1] = 1
                gens["p_right"][_index(c), b] += 1.0
                gens["p_right"][b, b] -= 1.0
            if bits[q] == 0 and bits[q + 1] == 1:
                c = bits.copy()
                c[q] = 1
                gens["p_left"][_index(c), b] += 1.0
                gens["p_left"][b, b] -= 1.0
    for g in gens.values():
        g.setflags(write=False)
    return gens


def _exact_spillover_matrix(n: int, p_left: float, p_right: float) -> np.ndarray:
    dim = 2**n
    s = np.zeros((dim, dim))
    bits_all = _bits_array(n)
    for b, bits in enumerate(bits_all):
        # each dark detector independently turns bright; no chaining
        flip_prob = np.zeros(n)
        for q in range(n):
            if bits[q] == 1:
                continue
            stay = 1.0
            if q > 0 and bits[q - 1] == 1:
                stay *= 1.0 - p_right
            if q < n - 1 and bits[q + 1] == 1:
                stay *= 1.0 - p_left
            flip_prob[q] = 1.0 - stay
        for c, cbits in enumerate(bits_all):
            if np.any(cbits < bits):
                continue
            prob = 1.0
            for q in range(n):
                if bits[q] == 0:
                    prob *= flip_prob[q] if cbits[q] == 1 else 1.0 - flip_prob[q]
            s[c, b] = prob
    return s


def readout_stochastic_matrix(spec: ErrorModelSpec, zeta: PhysicalParams, linear: bool = True) -> np.ndarray:
    """Column-stochastic readout matrix for the readout errors enabled in ``spec``.

    Dark/bright flips act first, then detector spillover. With ``linear`` the
    composition is truncated to first order in the probabilities.
    """
    n = spec.n
    names = set(spec.coefficient_names)
    probs = {name: (getattr(zeta, name) if name in names else 0.0) for name in READOUT_COEFFS}
    for name, v in probs.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    if linear:
        gens = readout_generators(n)
        s = np.eye(2**n)
        for name, v in probs.items():
            s = s + v * gens[name]
        return s
    flip = np.array([[1 - probs["p0"], probs["p1"]], [probs["p0"], 1 - probs["p1"]]])
    s_db = kron_all([flip] * n)
    return _exact_spillover_matrix(n, probs["p_left"], probs["p_right"]) @ s_db
