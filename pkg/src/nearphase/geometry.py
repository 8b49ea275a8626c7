"""Spherical coordinates, tangent frames, and pole-free measurement grids.

Chart convention: x1 = r sin(theta) cos(phi), x2 = r sin(theta) sin(phi),
x3 = r cos(theta), with theta in [0, pi] measured from the +x3 axis and
phi in [0, 2*pi).  The poles N_r = (0, 0, r) and S_r = (0, 0, -r) carry no
tangent frame and are excluded from every grid by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PoleError

_POLE_TOL = 1e-12


@dataclass(frozen=True)
class SpherePoint:
    """A point in spherical coordinates with its derived Cartesian triple."""

    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if self.r < 0:
            raise DomainError(f"radius must be nonnegative, got {self.r}")
        if not 0.0 <= self.theta <= np.pi:
            raise DomainError(f"theta must lie in [0, pi], got {self.theta}")

    @property
    def cart(self) -> np.ndarray:
        st = np.sin(self.theta)
        return self.r * np.array(
            [st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)]
        )

    @property
    def is_pole(self) -> bool:
        return np.sin(self.theta) < _POLE_TOL

    @classmethod
    def from_cart(cls, c) -> "SpherePoint":
        c = np.asarray(c, dtype=float)
        r = float(np.linalg.norm(c))
        if r == 0.0:
            return cls(0.0, 0.0, 0.0)
        theta = float(np.arccos(np.clip(c[2] / r, -1.0, 1.0)))
        phi = float(np.arctan2(c[1], c[0]) % (2 * np.pi))
        return cls(r, theta, phi)


@dataclass(frozen=True, eq=False)
class TangentFrame:
    """Orthonormal tangential pair (e_phi, e_theta) plus outward normal nu."""

    e_phi: np.ndarray
    e_theta: np.ndarray
    nu: np.ndarray


def tangent_frame(p: SpherePoint) -> TangentFrame:
    """Tangent frame at a non-pole sphere point.

    e_phi = (-sin phi, cos phi, 0), e_theta = (cos theta cos phi,
    cos theta sin phi, -sin theta), nu = x / |x|.  The handedness is
    e_phi x nu = e_theta (equivalently e_theta x e_phi = nu).
    """
    if p.is_pole:
        raise PoleError(f"tangent frame undefined at pole (theta={p.theta})")
    st, ct = np.sin(p.theta), np.cos(p.theta)
    sp, cp = np.sin(p.phi), np.cos(p.phi)
    e_phi = np.array([-sp, cp, 0.0])
    e_theta = np.array([ct * cp, ct * sp, -st])
    nu = np.array([st * cp, st * sp, ct])
    return TangentFrame(e_phi=e_phi, e_theta=e_theta, nu=nu)


@dataclass(eq=False)
class SphereGrid:
    """Measurement grid on a sphere, poles excluded by construction.

    ``weights`` (present for the gauss_legendre scheme) are surface quadrature
    weights summing to 4*pi*radius**2.
    """

    radius: float
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return self.theta.size

    @property
    def points(self) -> list[SpherePoint]:
        return [
            SpherePoint(self.radius, float(t), float(p))
            for t, p in zip(self.theta, self.phi)
        ]

    @property
    def cart(self) -> np.ndarray:
        st = np.sin(self.theta)
        return self.radius * np.stack(
            [st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)], axis=-1
        )

    def point(self, i: int) -> SpherePoint:
        return SpherePoint(self.radius, float(self.theta[i]), float(self.phi[i]))

    def frame(self, i: int) -> TangentFrame:
        return tangent_frame(self.point(i))


def sphere_grid(
    radius: float, n_theta: int, n_phi: int, scheme: str = "gauss_legendre"
) -> SphereGrid:
    """Tensor grid on the sphere of the given radius.

    gauss_legendre: theta from Gauss-Legendre nodes in cos(theta) (never at
    the poles), uniform phi, with surface quadrature weights.
    uniform_offset: theta at half-step offsets of a uniform subdivision,
    uniform phi, no weights.
    """
    if radius <= 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if n_theta < 2 or n_phi < 4:
        raise DomainError("need n_theta >= 2 and n_phi >= 4")
    phi_row = np.arange(n_phi) * 2 * np.pi / n_phi
    if scheme == "gauss_legendre":
        nodes, wts = np.polynomial.legendre.leggauss(n_theta)
        theta_row = np.arccos(nodes)
        weights = np.repeat(wts, n_phi) * (2 * np.pi / n_phi) * radius**2
    elif scheme == "uniform_offset":
        theta_row = (np.arange(n_theta) + 0.5) * np.pi / n_theta
        weights = None
    else:
        raise DomainError(f"unknown grid scheme {scheme!r}")
    theta = np.repeat(theta_row, n_phi)
    phi = np.tile(phi_row, n_theta)
    return SphereGrid(radius=radius, theta=theta, phi=phi, weights=weights)


def great_circle(
    center_point: SpherePoint,
    normal,
    n_samples: int,
    max_angle: float,
) -> list[SpherePoint]:
    """Points on the sphere circle {x : (x - center).normal = 0} near center.

    ``normal`` must be a unit vector tangent to the sphere at center_point;
    the circle is then a great circle through the center point.  Points are
    parameterized by arc angle t and returned at t = max_angle * i / n_samples
    for i = 1..n_samples (increasing arc distance from the center).
    """
    normal = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(normal) - 1.0) > 1e-10:
        raise DomainError("great_circle normal must be a unit vector")
    c = center_point.cart
    radius = center_point.r
    if radius <= 0:
        raise DomainError("great_circle needs a positive radius")
    chat = c / radius
    if abs(float(np.dot(normal, chat))) > 1e-10:
        raise DomainError("great_circle normal must be tangent at center_point")
    w = np.cross(chat, normal)
    w /= np.linalg.norm(w)
    out = []
    for i in range(1, n_samples + 1):
        t = max_angle * i / n_samples
        x = radius * (np.cos(t) * chat + np.sin(t) * w)
        out.append(SpherePoint.from_cart(x))
    return out
