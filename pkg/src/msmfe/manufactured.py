"""Closed-form elasticity fields used to verify the discretization.

A manufactured case prescribes a smooth displacement field and an isotropic
material; the stress, rotation, and body force then follow by
differentiation:

    strain   = sym grad u,
    stress   = 2 mu strain + lambda tr(strain) I,
    rotation = (1/2) (du1/dy - du2/dx)   (scalar; skew part of grad u),
    force    = row-wise divergence of stress.

All field callables accept a single point (2,) or a batch (n, 2) and return
correspondingly shaped arrays, so error integration can evaluate them at all
quadrature points at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .reference import SKEW_UNIT

__all__ = [
    "IsotropicCompliance",
    "ManufacturedCase",
    "evaluate_case",
    "dirichlet_g",
    "get_case",
    "list_cases",
]

_VEC_TRACE = np.array([1.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class IsotropicCompliance:
    """Inverse of the isotropic plane elasticity tensor.

    Applies  A tau = (tau - lam/(2 mu + 2 lam) tr(tau) I) / (2 mu)  so that
    A (2 mu eps + lam tr(eps) I) = eps.  Requires mu > 0 and lam > -mu,
    which make the operator symmetric positive definite on 2x2 tensors.

    Parameters
    ----------
    mu, lam : float
        Shear modulus and first Lame parameter.
    """

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lam > -self.mu:
            raise ValueError(f"lam must exceed -mu, got lam={self.lam}")

    def apply(self, tau) -> np.ndarray:
        """Compliance applied to tensors of shape (..., 2, 2)."""
        tau = np.asarray(tau, dtype=float)
        trace = tau[..., 0, 0] + tau[..., 1, 1]
        out = tau - (self.lam / (2 * self.mu + 2 * self.lam)) * trace[
            ..., None, None
        ] * np.eye(2)
        return out / (2 * self.mu)

    def apply_stiffness(self, eps) -> np.ndarray:
        """Stiffness (inverse of :meth:`apply`) on tensors (..., 2, 2)."""
        eps = np.asarray(eps, dtype=float)
        trace = eps[..., 0, 0] + eps[..., 1, 1]
        return 2 * self.mu * eps + self.lam * trace[..., None, None] * np.eye(2)

    def as_matrix(self) -> np.ndarray:
        """4x4 matrix acting on row-major vec(tau) = (t00, t01, t10, t11)."""
        shrink = self.lam / (2 * self.mu * (2 * self.mu + 2 * self.lam))
        return np.eye(4) / (2 * self.mu) - shrink * np.outer(_VEC_TRACE, _VEC_TRACE)


@dataclass(frozen=True)
class ManufacturedCase:
    """A displacement field, its material, and the induced load.

    Attributes
    ----------
    name : str
    compliance : IsotropicCompliance
    displacement : callable
        (n, 2) points -> (n, 2) displacements.
    displacement_gradient : callable
        (n, 2) points -> (n, 2, 2) gradients, entry [i, j] = d u_i / d x_j.
    body_force : callable
        (n, 2) points -> (n, 2); the row-wise divergence of the stress.
    """

    name: str
    compliance: IsotropicCompliance
    displacement: Callable[[np.ndarray], np.ndarray]
    displacement_gradient: Callable[[np.ndarray], np.ndarray]
    body_force: Callable[[np.ndarray], np.ndarray]

    def strain(self, points) -> np.ndarray:
        grad = np.asarray(self.displacement_gradient(points))
        return 0.5 * (grad + np.swapaxes(grad, -1, -2))

    def stress(self, points) -> np.ndarray:
        return self.compliance.apply_stiffness(self.strain(points))

    def rotation(self, points) -> np.ndarray:
        """Scalar rotation, one value per point."""
        grad = np.asarray(self.displacement_gradient(points))
        return 0.5 * (grad[..., 0, 1] - grad[..., 1, 0])

    def rotation_skew(self, points) -> np.ndarray:
        """Skew tensor form of the rotation, shape (..., 2, 2)."""
        p = np.asarray(self.rotation(points))
        return p[..., None, None] * SKEW_UNIT


def evaluate_case(case: ManufacturedCase, point):
    """All exact fields at one point: (displacement, stress, rotation, force)."""
    pt = np.asarray(point, dtype=float)
    return (
        case.displacement(pt),
        case.stress(pt),
        case.rotation(pt),
        case.body_force(pt),
    )


def dirichlet_g(case: ManufacturedCase, point) -> np.ndarray:
    """Essential boundary displacement; identical to the case's field."""
    return case.displacement(point)


def _trig_case() -> ManufacturedCase:
    """The trigonometric benchmark with stiff material contrast."""
    mu, lam = 79.3, 123.0
    pi = np.pi

    def displacement(points):
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return np.stack(
            [np.cos(pi * x) * np.sin(2 * pi * y), np.sin(pi * x) * np.cos(pi * y)],
            axis=-1,
        )

    def displacement_gradient(points):
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        g = np.empty(pts.shape[:-1] + (2, 2))
        g[..., 0, 0] = -pi * np.sin(pi * x) * np.sin(2 * pi * y)
        g[..., 0, 1] = 2 * pi * np.cos(pi * x) * np.cos(2 * pi * y)
        g[..., 1, 0] = pi * np.cos(pi * x) * np.cos(pi * y)
        g[..., 1, 1] = -pi * np.sin(pi * x) * np.sin(pi * y)
        return g

    def body_force(points):
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        f1 = (
            -(pi**2)
            * np.cos(pi * x)
            * ((lam + 6 * mu) * np.sin(2 * pi * y) + (lam + mu) * np.sin(pi * y))
        )
        f2 = (
            -(pi**2)
            * np.sin(pi * x)
            * (2 * (lam + mu) * np.cos(2 * pi * y) + (lam + 3 * mu) * np.cos(pi * y))
        )
        return np.stack([f1, f2], axis=-1)

    return ManufacturedCase(
        name="trig",
        compliance=IsotropicCompliance(mu=mu, lam=lam),
        displacement=displacement,
        displacement_gradient=displacement_gradient,
        body_force=body_force,
    )


def _linear_case() -> ManufacturedCase:
    """Affine displacement: constant stress and rotation, zero body force."""
    grad = np.array([[0.3, -0.8], [0.5, 0.2]])
    shift = np.array([0.1, -0.4])

    def displacement(points):
        pts = np.asarray(points, dtype=float)
        return pts @ grad.T + shift

    def displacement_gradient(points):
        pts = np.asarray(points, dtype=float)
        return np.broadcast_to(grad, pts.shape[:-1] + (2, 2)).copy()

    def body_force(points):
        pts = np.asarray(points, dtype=float)
        return np.zeros(pts.shape[:-1] + (2,))

    return ManufacturedCase(
        name="linear",
        compliance=IsotropicCompliance(mu=1.0, lam=1.0),
        displacement=displacement,
        displacement_gradient=displacement_gradient,
        body_force=body_force,
    )


_CASE_FACTORIES: dict[str, Callable[[], ManufacturedCase]] = {
    "trig": _trig_case,
    "linear": _linear_case,
}


def get_case(name: str) -> ManufacturedCase:
    """Look up a registered manufactured case by name."""
    try:
        factory = _CASE_FACTORIES[name]
    except KeyError:
        known = ", ".join(sorted(_CASE_FACTORIES))
        raise KeyError(f"unknown case {name!r}; registered cases: {known}") from None
    return factory()


def list_cases() -> list[str]:
    """Names of all registered manufactured cases, sorted."""
    return sorted(_CASE_FACTORIES)
