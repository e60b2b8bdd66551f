"""Closed-form case data: material law round trips and field consistency."""

from __future__ import annotations

import numpy as np
import pytest

from msmfe.manufactured import (
    IsotropicCompliance,
    dirichlet_g,
    evaluate_case,
    get_case,
    list_cases,
)
from msmfe.reference import SKEW_UNIT


# -- material law ----------------------------------------------------------------


def test_compliance_validates_parameters():
    with pytest.raises(ValueError):
        IsotropicCompliance(mu=0.0, lam=1.0)
    with pytest.raises(ValueError):
        IsotropicCompliance(mu=1.0, lam=-1.5)
    IsotropicCompliance(mu=1.0, lam=-0.5)  # lam > -mu is allowed


def test_compliance_of_identity():
    comp = IsotropicCompliance(mu=79.3, lam=123.0)
    out = comp.apply(np.eye(2))
    assert np.allclose(out, np.eye(2) / 404.6, atol=1e-15)


def test_compliance_round_trip():
    comp = IsotropicCompliance(mu=79.3, lam=123.0)
    rng = np.random.default_rng(21)
    eps = rng.normal(size=(100, 2, 2))
    eps = 0.5 * (eps + eps.transpose(0, 2, 1))
    assert np.allclose(comp.apply(comp.apply_stiffness(eps)), eps, atol=1e-13)
    assert np.allclose(comp.apply_stiffness(comp.apply(eps)), eps, atol=1e-13)


def test_compliance_trace_identity():
    comp = IsotropicCompliance(mu=79.3, lam=123.0)
    rng = np.random.default_rng(22)
    tau = rng.normal(size=(50, 2, 2))
    out = comp.apply(tau)
    traces = out[:, 0, 0] + out[:, 1, 1]
    expected = (tau[:, 0, 0] + tau[:, 1, 1]) / (2 * (comp.mu + comp.lam))
    assert np.allclose(traces, expected, atol=1e-13)


def test_compliance_matrix_matches_apply():
    comp = IsotropicCompliance(mu=79.3, lam=123.0)
    rng = np.random.default_rng(23)
    amat = comp.as_matrix()
    for tau in rng.normal(size=(20, 2, 2)):
        via_matrix = (amat @ tau.reshape(4)).reshape(2, 2)
        assert np.allclose(via_matrix, comp.apply(tau), atol=1e-15)


# -- trigonometric case ------------------------------------------------------------


def test_trig_displacement_value():
    case = get_case("trig")
    u = case.displacement(np.array([0.5, 0.25]))
    assert np.allclose(u, [0.0, np.sqrt(2.0) / 2.0], atol=1e-15)


def test_trig_rotation_at_origin():
    # p = (du1/dy - du2/dx) / 2 = (2*pi - pi) / 2 at the origin, and the skew
    # tensor built from p is [[0, p], [-p, 0]].
    case = get_case("trig")
    origin = np.zeros(2)
    assert np.isclose(case.rotation(origin), np.pi / 2, atol=1e-14)
    skew = case.rotation_skew(origin)
    assert np.allclose(skew, (np.pi / 2) * SKEW_UNIT, atol=1e-14)


def test_trig_stress_symmetric():
    case = get_case("trig")
    pts = np.random.default_rng(24).uniform(size=(100, 2))
    sig = case.stress(pts)
    assert np.abs(sig - sig.transpose(0, 2, 1)).max() < 1e-14


def test_trig_constitutive_identity():
    case = get_case("trig")
    pts = np.random.default_rng(25).uniform(size=(100, 2))
    assert np.allclose(
        case.compliance.apply(case.stress(pts)), case.strain(pts), atol=1e-12
    )


def test_trig_gradient_matches_finite_differences():
    case = get_case("trig")
    rng = np.random.default_rng(26)
    step = 1e-7
    for pt in rng.uniform(0.1, 0.9, size=(20, 2)):
        grad = case.displacement_gradient(pt)
        for j in range(2):
            dv = np.zeros(2)
            dv[j] = step
            fd = (case.displacement(pt + dv) - case.displacement(pt - dv)) / (
                2 * step
            )
            assert np.allclose(grad[:, j], fd, atol=1e-6)


def test_trig_force_is_stress_divergence():
    case = get_case("trig")
    rng = np.random.default_rng(27)
    step = 1e-6
    pts = rng.uniform(0.1, 0.9, size=(50, 2))
    fvals = case.body_force(pts)
    for k, pt in enumerate(pts):
        div = np.zeros(2)
        for j in range(2):
            dv = np.zeros(2)
            dv[j] = step
            dsig = (case.stress(pt + dv) - case.stress(pt - dv)) / (2 * step)
            div += dsig[:, j]
        assert np.allclose(div, fvals[k], rtol=1e-5, atol=1e-5)


def test_trig_material_parameters():
    case = get_case("trig")
    assert case.compliance.mu == 79.3
    assert case.compliance.lam == 123.0


# -- linear case -------------------------------------------------------------------


def test_linear_case_fields():
    case = get_case("linear")
    pts = np.random.default_rng(28).uniform(size=(10, 2))
    grads = case.displacement_gradient(pts)
    assert np.allclose(grads, grads[0], atol=1e-15)  # constant gradient
    assert np.allclose(case.body_force(pts), 0.0, atol=1e-15)
    sig = case.stress(pts)
    assert np.allclose(sig, sig[0], atol=1e-14)  # constant stress


# -- case registry and helpers -------------------------------------------------------


def test_registry_contents():
    names = list_cases()
    assert "trig" in names and "linear" in names
    assert names == sorted(names)
    with pytest.raises(KeyError, match="unknown case"):
        get_case("missing")


def test_evaluate_case_bundle():
    case = get_case("trig")
    pt = np.array([0.3, 0.6])
    u, sig, gam, f = evaluate_case(case, pt)
    assert np.allclose(u, case.displacement(pt), atol=0)
    assert np.allclose(sig, case.stress(pt), atol=0)
    assert np.allclose(gam, case.rotation(pt), atol=0)
    assert np.allclose(f, case.body_force(pt), atol=0)


def test_dirichlet_data_is_displacement():
    case = get_case("trig")
    for pt in ([0.0, 0.0], [1.0, 0.5], [0.25, 1.0]):
        pt = np.asarray(pt, dtype=float)
        assert np.array_equal(dirichlet_g(case, pt), case.displacement(pt))
    assert np.allclose(dirichlet_g(case, np.zeros(2)), [0.0, 0.0], atol=1e-15)
    assert np.allclose(dirichlet_g(case, np.array([1.0, 0.5])), 0.0, atol=1e-15)
