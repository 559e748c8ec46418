import math

import numpy as np
import pytest

from blindcal.error_models import (
    ERROR_TYPES, NESTED_ERROR_LEVELS, NINE_PARAMETER_ERRORS, XI_ACTUAL, CalibrationVector, ErrorModelSpec,
    PhysicalParams, effective_projectors, projector_atom_derivatives, readout_generators,
    readout_stochastic_matrix, rotation_error_transform, xi_to_zeta, zeta_to_xi,
)
from blindcal.operators import outcome_signs, pauli_bases, pauli_operator

ATOMS = ("or", "l_cos", "l_sin", "r_cos", "r_sin", "nnl_cos", "nnl_sin", "nnr_cos", "nnr_sin")


def _observable(basis, atoms):
    return np.tensordot(outcome_signs(len(basis)), effective_projectors(basis, atoms), axes=1)


# -- PhysicalParams ----------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(p0=-0.1)
    with pytest.raises(ValueError):
        PhysicalParams(p1=1.5)
    with pytest.raises(ValueError):
        PhysicalParams(xi_or=1.2)
    with pytest.raises(ValueError):
        PhysicalParams(xi_l=float("nan"))


def test_phases_reduced():
    z = PhysicalParams(phi_l=-math.pi / 2, phi_r=5 * math.pi)
    assert z.phi_l == pytest.approx(1.5 * math.pi)
    assert z.phi_r == pytest.approx(math.pi)
    assert 0 <= PhysicalParams(phi_l=2 * math.pi).phi_l < 2 * math.pi


def test_params_dict_roundtrip_and_scaling():
    assert PhysicalParams.from_dict(XI_ACTUAL.to_dict()) == XI_ACTUAL
    with pytest.raises(ValueError):
        PhysicalParams.from_dict({"bogus": 1})
    half = XI_ACTUAL.scaled(0.5)
    assert half.p1 == pytest.approx(XI_ACTUAL.p1 / 2)
    assert half.phi_l == XI_ACTUAL.phi_l


# -- ErrorModelSpec ----------------------------------------------------------

def test_nine_parameter_layout():
    spec = ErrorModelSpec(3, NINE_PARAMETER_ERRORS)
    assert spec.k == 9
    assert spec.coefficient_names == ("ideal", "xi_or", "p0", "p1", "p_left", "p_right",
                                      "xi_l_cos", "xi_l_sin", "xi_r_cos", "xi_r_sin")


def test_nested_level_parameter_counts():
    assert [ErrorModelSpec(3, lvl).k for lvl in NESTED_ERROR_LEVELS] == [2, 4, 5, 6, 7, 9, 13]


def test_nesting_enforced():
    with pytest.raises(ValueError):
        ErrorModelSpec(3, ("crosstalk_phase", "crosstalk_symmetric"))
    with pytest.raises(ValueError):
        ErrorModelSpec(3, ("crosstalk_asymmetric",))
    with pytest.raises(ValueError):
        ErrorModelSpec(3, ("teleportation",))
    with pytest.raises(ValueError):
        ErrorModelSpec(0)


def test_spec_json_roundtrip_and_ranges():
    spec = ErrorModelSpec(2, ("over_rotation", "dark_bright"), (("p0", (0.0, 0.1)),))
    back = ErrorModelSpec.from_json(spec.to_json())
    assert back == spec
    assert back.upper[spec.coefficient_names.index("p0")] == 0.1
    assert spec.lower[0] == 0.5 and spec.upper[0] == 1.5
    with pytest.raises(ValueError):
        ErrorModelSpec.from_json({"errors": []})
    with pytest.raises(ValueError):
        ErrorModelSpec(2, ("dark_bright",), (("xi_or", (0, 1)),))


def test_param_to_coeff():
    spec = ErrorModelSpec(3)
    m = spec.param_to_coeff
    names = spec.coefficient_names
    assert [names[i] for i in m["phi_l"]] == ["xi_l_cos", "xi_l_sin"]
    assert [names[i] for i in m["p1"]] == ["p1"]
    sym = ErrorModelSpec(3, ("crosstalk_symmetric",)).param_to_coeff
    assert sym["xi_l"] == sym["xi_r"] == [1]


# -- zeta <-> xi -------------------------------------------------------------

def test_zeta_to_xi_zero_is_ideal():
    xi = zeta_to_xi(ErrorModelSpec(3), PhysicalParams())
    assert np.array_equal(xi.values, CalibrationVector.ideal(ErrorModelSpec(3)).values)


def test_zeta_to_xi_crosstalk_phase_products():
    d = zeta_to_xi(ErrorModelSpec(3), XI_ACTUAL).as_dict()
    assert d["xi_l_cos"] == pytest.approx(0.018102, abs=1e-6)
    assert d["xi_l_sin"] == pytest.approx(0.018102, abs=1e-6)
    assert d["xi_r_cos"] == pytest.approx(0.0118 * math.cos(math.pi / 8))
    assert d["p1"] == 0.01541


def test_zeta_xi_roundtrip_crosstalk():
    spec = ErrorModelSpec(3, ERROR_TYPES)
    z = PhysicalParams(xi_l=0.03, phi_l=2.0, xi_r=0.02, phi_r=4.0, xi_nnl=0.01, phi_nnl=1.0, p0=0.01)
    back = xi_to_zeta(spec, zeta_to_xi(spec, z))
    for name in ("xi_l", "phi_l", "xi_r", "phi_r", "xi_nnl", "phi_nnl", "p0"):
        assert getattr(back, name) == pytest.approx(getattr(z, name), abs=1e-12)


def test_calibration_vector_bounds():
    spec = ErrorModelSpec(3)
    xi = CalibrationVector.ideal(spec)
    assert xi.in_bounds()
    assert not xi.with_values(np.r_[1.0, 0.0, -0.1, np.zeros(7)]).in_bounds()
    with pytest.raises(ValueError):
        CalibrationVector(("a",), np.zeros(2), np.zeros(2), np.ones(2))


# -- readout -----------------------------------------------------------------

def test_readout_zero_is_identity():
    spec = ErrorModelSpec(3)
    assert np.array_equal(readout_stochastic_matrix(spec, PhysicalParams()), np.eye(8))
    assert np.allclose(readout_stochastic_matrix(spec, PhysicalParams(), linear=False), np.eye(8))


def test_dark_error_single_qubit():
    s = readout_stochastic_matrix(ErrorModelSpec(1, ("dark_bright",)), PhysicalParams(p0=0.0032))
    assert s[1, 0] == pytest.approx(0.0032)
    assert s[0, 0] == pytest.approx(1 - 0.0032)


def test_spillover_two_qubits():
    spec = ErrorModelSpec(2, ("spillover",))
    s = readout_stochastic_matrix(spec, PhysicalParams(p_right=0.0041))
    # true 10 -> read 11
    assert s[3, 2] == pytest.approx(0.0041)
    s = readout_stochastic_matrix(spec, PhysicalParams(p_left=0.0017))
    assert s[3, 1] == pytest.approx(0.0017)
    assert s[3, 2] == 0.0


def test_readout_columns_stochastic():
    spec = ErrorModelSpec(3)
    z = PhysicalParams(p0=0.1, p1=0.2, p_left=0.15, p_right=0.05)
    exact = readout_stochastic_matrix(spec, z, linear=False)
    lin = readout_stochastic_matrix(spec, z)
    assert np.allclose(exact.sum(axis=0), 1.0, atol=1e-12)
    assert np.all(exact >= 0)
    assert np.allclose(lin.sum(axis=0), 1.0, atol=1e-12)
    for g in readout_generators(3).values():
        assert np.allclose(g.sum(axis=0), 0.0, atol=1e-15)


def test_readout_disabled_errors_ignored():
    spec = ErrorModelSpec(2, ("dark_bright",))
    s = readout_stochastic_matrix(spec, PhysicalParams(p0=0.01, p_left=0.3))
    assert s[3, 1] == pytest.approx(0.01)


def test_readout_linear_truncation_second_order():
    spec = ErrorModelSpec(3)
    base = PhysicalParams(p0=0.3, p1=0.4, p_left=0.2, p_right=0.3)
    devs = []
    scales = [0.02, 0.04, 0.08, 0.16]
    for s in scales:
        z = base.scaled(s)
        devs.append(np.abs(readout_stochastic_matrix(spec, z) - readout_stochastic_matrix(spec, z, False)).max())
    slope = np.polyfit(np.log(scales), np.log(devs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.2)


# -- rotation errors ---------------------------------------------------------

def test_rotation_transform_zero():
    spec = ErrorModelSpec(2)
    terms = rotation_error_transform(spec, PhysicalParams(), "XY")
    assert len(terms) == 1 and terms[0][0] == "ideal"
    assert np.allclose(terms[0][1], pauli_operator("XY"))


def test_over_rotation_single_qubit_closed_form():
    spec = ErrorModelSpec(1, ("over_rotation",))
    xi = 0.01
    terms = dict(rotation_error_transform(spec, PhysicalParams(xi_or=xi), "X"))
    # per-unit slope of the Z coefficient is -pi
    assert np.allclose(terms["xi_or"] / xi, -math.pi * pauli_operator("Z"), atol=1e-12)
    exact = _observable("X", {"or": xi})
    closed = math.cos(xi * math.pi) * pauli_operator("X") - math.sin(xi * math.pi) * pauli_operator("Z")
    assert np.allclose(exact, closed, atol=1e-12)


def test_over_rotation_leaves_z_basis_alone():
    assert np.allclose(_observable("Z", {"or": 0.3}), pauli_operator("Z"))
    d = projector_atom_derivatives("ZZ")
    assert "or" not in d


def test_crosstalk_left_xy_gives_yy():
    spec = ErrorModelSpec(2, ("crosstalk_symmetric", "crosstalk_asymmetric"))
    xi = 1e-3
    terms = dict(rotation_error_transform(spec, PhysicalParams(xi_l=xi), "XY"))
    assert set(terms) == {"ideal", "xi_l"}
    assert np.allclose(terms["xi_l"] / xi, math.pi / 2 * pauli_operator("YY"), atol=1e-12)
    h = 1e-6
    fd = (_observable("XY", {"l_cos": h}) - _observable("XY", {"l_cos": -h})) / (2 * h)
    assert np.allclose(terms["xi_l"] / xi, fd, atol=1e-8)


def test_crosstalk_structure_matches_pauli_expansion():
    # XY -> XY + pi/2 xi_l (cos phi_l YY + sin phi_l ZY) - pi/2 xi_r sin phi_r XZ
    spec = ErrorModelSpec(2, ("crosstalk_symmetric", "crosstalk_asymmetric", "crosstalk_phase"))
    z = PhysicalParams(xi_l=0.02, phi_l=0.7, xi_r=0.01, phi_r=2.1)
    total = sum(op for _, op in rotation_error_transform(spec, z, "XY"))
    expected = (pauli_operator("XY")
                + math.pi / 2 * z.xi_l * (math.cos(z.phi_l) * pauli_operator("YY")
                                          + math.sin(z.phi_l) * pauli_operator("ZY"))
                - math.pi / 2 * z.xi_r * math.sin(z.phi_r) * pauli_operator("XZ"))
    assert np.allclose(total, expected, atol=1e-12)


@pytest.mark.parametrize("basis", pauli_bases(3))
def test_exact_derivatives_match_finite_differences(basis):
    derivs = projector_atom_derivatives(basis)
    h = 1e-6
    for atom in ATOMS:
        fd = (effective_projectors(basis, {atom: h}) - effective_projectors(basis, {atom: -h})) / (2 * h)
        got = derivs.get(atom, np.zeros_like(fd))
        assert np.abs(got - fd).max() < 1e-8, atom


@pytest.mark.parametrize("basis", ["XYZ", "YXX", "ZZX"])
def test_rotation_derivatives_trace_free_per_basis(basis):
    for d in projector_atom_derivatives(basis).values():
        assert np.abs(d.sum(axis=0)).max() < 1e-12
        for op in d:
            assert np.allclose(op, op.conj().T, atol=1e-14)


def test_first_order_observable_second_order_error():
    base = {"or": 0.5, "l_cos": 0.3, "l_sin": 0.2, "r_cos": -0.25, "r_sin": 0.1}
    derivs = projector_atom_derivatives("XYX")
    ideal = effective_projectors("XYX")
    scales = [0.02, 0.04, 0.08, 0.16]
    devs = []
    for s in scales:
        atoms = {k: s * v for k, v in base.items()}
        lin = ideal + sum(v * derivs[k] for k, v in atoms.items())
        devs.append(np.abs(lin - effective_projectors("XYX", atoms)).max())
    assert np.polyfit(np.log(scales), np.log(devs), 1)[0] == pytest.approx(2.0, abs=0.2)
