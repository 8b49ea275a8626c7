"""Electric dipole incident fields, PEC-sphere scattering by vector spherical
wave functions, tangential measurements, and near-source singularity probes.

Basis: M_n^m(x) = curl{x f_n(k|x|) Y_n^m(xhat)} and N_n^m = (1/k) curl M_n^m,
with f = j_n for regular and f = h_n^(1) for outgoing waves and orthonormal
spherical harmonics Y_n^m.  In the local spherical frame,

    M = f_n(rho) (B e_theta - A e_phi),
    N = (n(n+1)/rho) f_n(rho) Y e_r + g_n(rho) (A e_theta + B e_phi),

where rho = kr, A = dY/dtheta, B = i m Y / sin(theta), and
g_n(rho) = (f_n(rho) + rho f_n'(rho)) / rho.

The incident dipole field expands through the dyadic kernel addition theorem:
for |x| < |y|,

    E_inc(x, y) p = -k^2 sum_{n,m} [ M_j(x) (conj M_h(y) . p)
                                   + N_j(x) (conj N_h(y) . p) ] / (n(n+1)),

with conj acting on the angular factors only (h_n stays outgoing).  PEC
reflection divides out per mode: -j_n(ka)/h_n(ka) for M and
-[ka j_n]'(ka)/[ka h_n]'(ka) for N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError
from .geometry import SpherePoint, TangentFrame, great_circle, tangent_frame
from .specfun import _sph_jy_table, norm_legendre_table

TRUNC_TARGET = 1e-12
_N_EXTEND = 8
_N_CAP = 200


@dataclass(frozen=True, eq=False)
class DipoleSource:
    """Electric point dipole: location y, real polarization p, activation tau."""

    y: np.ndarray
    p: np.ndarray
    tau: int = 1

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if self.tau not in (0, 1):
            raise DomainError(f"activation flag must be 0 or 1, got {self.tau}")
        if self.tau == 1 and np.linalg.norm(self.p) == 0.0:
            raise DomainError("active dipole needs a nonzero polarization")


@dataclass(frozen=True, eq=False)
class PlaneWaveEm:
    """Electromagnetic plane wave: direction d, polarization p."""

    d: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if abs(np.linalg.norm(self.d) - 1.0) > 1e-10:
            raise DomainError("plane-wave direction must be a unit vector")


@dataclass(frozen=True, eq=False)
class DipoleMatrix:
    """3x3 electric and magnetic dipole matrices E_inc(x, y), H_inc(x, y)."""

    e: np.ndarray
    h: np.ndarray


def dipole_matrix(k: float, x, y) -> DipoleMatrix:
    """Closed-form dipole matrices at x for a source at y (x != y).

    E = (i/k) { [k^2 + (ik - 1/s)(1/s)] I + rhat rhat^T f(s) } Phi_k with
    f(s) = 3/s^2 - 3ik/s - k^2 and s = |x - y|; H = (ik - 1/s) Phi_k [rhat]_x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    s = float(np.linalg.norm(d))
    if s < 1e-14 * (1.0 + np.linalg.norm(y)):
        raise SingularityError("dipole matrix evaluated at x = y")
    rhat = d / s
    phi = np.exp(1j * k * s) / (4 * np.pi * s)
    f = 3.0 / s**2 - 3j * k / s - k**2
    scal = k**2 + (1j * k - 1.0 / s) / s
    e = (1j / k) * (scal * np.eye(3) + f * np.outer(rhat, rhat)) * phi
    cross = np.array(
        [
            [0.0, -rhat[2], rhat[1]],
            [rhat[2], 0.0, -rhat[0]],
            [-rhat[1], rhat[0], 0.0],
        ]
    )
    h = (1j * k - 1.0 / s) * phi * cross
    return DipoleMatrix(e=e, h=h)


def _frames(pts: np.ndarray):
    """Spherical frame vectors e_r, e_theta, e_phi at each point (off poles)."""
    r = np.linalg.norm(pts, axis=-1)
    ct = np.clip(pts[:, 2] / r, -1.0, 1.0)
    st = np.hypot(pts[:, 0], pts[:, 1]) / r  # stable near the poles
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    cp, sp = np.cos(phi), np.sin(phi)
    e_r = pts / r[:, None]
    e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_p = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return r, ct, st, phi, e_r, e_t, e_p


class _AngTables:
    """Y, A = dY/dtheta, B = i m Y / sin(theta) for all orders at a point batch.

    At pole points A and B are replaced by their meridian limits (nonzero only
    for |m| = 1), consistent with the frame azimuth reported by arctan2 there.
    """

    def __init__(self, n_max: int, ct: np.ndarray, st: np.ndarray, phi: np.ndarray):
        self.n_max = n_max
        self.pbar, self.dpbar = norm_legendre_table(n_max, ct, st)
        ms = np.arange(n_max + 1)
        self.eim = np.exp(1j * np.outer(ms, phi))
        self.north = st < 1e-13
        self.south = self.north & (ct < 0)
        self.north = self.north & (ct > 0)
        self.any_pole = bool(np.any(self.north) or np.any(self.south))
        with np.errstate(divide="ignore", invalid="ignore"):
            self.inv_st = np.where(st > 0, 1.0 / np.where(st > 0, st, 1.0), np.inf)

    def yab(self, n: int, m: int):
        am = abs(m)
        with np.errstate(invalid="ignore"):
            y = self.pbar[n, am] * self.eim[am]
            a = self.dpbar[n, am] * self.eim[am]
            b = 1j * am * self.pbar[n, am] * self.inv_st * self.eim[am]
        if self.any_pole:
            if am == 1:
                c = np.sqrt((2 * n + 1) * n * (n + 1) / (16 * np.pi))
                sgn = -1.0 if (n - 1) % 2 else 1.0
                a = np.where(self.north, -c * self.eim[1], a)
                b = np.where(self.north, -1j * c * self.eim[1], b)
                a = np.where(self.south, sgn * c * self.eim[1], a)
                b = np.where(self.south, -1j * sgn * c * self.eim[1], b)
            else:
                pole = self.north | self.south
                a = np.where(pole, 0.0, a)
                b = np.where(pole, 0.0, b)
        if m >= 0:
            return y, a, b
        sign = -1.0 if am % 2 else 1.0
        return sign * np.conj(y), sign * np.conj(a), sign * np.conj(b)

    def yab_all(self, n: int):
        """(Y, A, B) stacked over m = -n..n, each of shape (2n+1,) + P."""
        ms = np.arange(n + 1)
        with np.errstate(invalid="ignore"):
            y_pos = self.pbar[n, : n + 1] * self.eim[: n + 1]
            a_pos = self.dpbar[n, : n + 1] * self.eim[: n + 1]
            b_pos = (
                1j * ms[:, None] * self.pbar[n, : n + 1] * self.inv_st * self.eim[: n + 1]
            )
        if self.any_pole:
            pole = self.north | self.south
            a_pos = np.where(pole, 0.0, a_pos)
            b_pos = np.where(pole, 0.0, b_pos)
            if n >= 1:
                c = np.sqrt((2 * n + 1) * n * (n + 1) / (16 * np.pi))
                sgn = -1.0 if (n - 1) % 2 else 1.0
                a_pos[1] = np.where(self.north, -c * self.eim[1], a_pos[1])
                b_pos[1] = np.where(self.north, -1j * c * self.eim[1], b_pos[1])
                a_pos[1] = np.where(self.south, sgn * c * self.eim[1], a_pos[1])
                b_pos[1] = np.where(self.south, -1j * sgn * c * self.eim[1], b_pos[1])
        if n == 0:
            return y_pos, a_pos, b_pos
        signs = np.where(ms[1:] % 2 == 1, -1.0, 1.0)[::-1, None]  # m = -n..-1
        y_neg = signs * np.conj(y_pos[1:][::-1])
        a_neg = signs * np.conj(a_pos[1:][::-1])
        b_neg = signs * np.conj(b_pos[1:][::-1])
        return (
            np.concatenate([y_neg, y_pos]),
            np.concatenate([a_neg, a_pos]),
            np.concatenate([b_neg, b_pos]),
        )


def _radial_tables(n_max: int, rho: np.ndarray, radial: str):
    """(f_n(rho), g_n(rho)) for f = j (regular) or h = j + iy (outgoing)."""
    j, y, jp, yp = _sph_jy_table(n_max, rho)
    if radial == "j":
        f, fp = j, jp
    else:
        f, fp = j + 1j * y, jp + 1j * yp
    g = (f + rho * fp) / rho
    return f, g


def _vswf_sum(k: float, a_nm: np.ndarray, b_nm: np.ndarray, pts: np.ndarray, radial: str):
    """sum_{n,m} a_nm M_n^m + b_nm N_n^m at pts, with j or h radial factors."""
    r, ct, st, phi, e_r, e_t, e_p = _frames(pts)
    n_max = a_nm.shape[0] - 1
    ang = _AngTables(n_max, ct, st, phi)
    f, g = _radial_tables(n_max, k * r, radial)
    rho = k * r
    vr = np.zeros(pts.shape[0], dtype=complex)
    vt = np.zeros(pts.shape[0], dtype=complex)
    vp = np.zeros(pts.shape[0], dtype=complex)
    for n in range(1, n_max + 1):
        am = a_nm[n, n_max - n : n_max + n + 1]
        bm = b_nm[n, n_max - n : n_max + n + 1]
        if not (np.any(am) or np.any(bm)):
            continue
        yv, av, bv = ang.yab_all(n)
        b_y = bm @ yv
        a_a, a_b = am @ av, am @ bv
        b_a, b_b = bm @ av, bm @ bv
        vr += (n * (n + 1) / rho) * f[n] * b_y
        vt += f[n] * a_b + g[n] * b_a
        vp += -f[n] * a_a + g[n] * b_b
    return vr[:, None] * e_r + vt[:, None] * e_t + vp[:, None] * e_p


@dataclass(eq=False)
class EmField:
    """Modal vector wave series for a PEC-sphere scattered field.

    Coefficient arrays are indexed [n, m + n_max]; a_nm multiplies outgoing
    M_n^m, b_nm multiplies outgoing N_n^m.  The incident part is evaluated in
    closed form from the stored source.
    """

    k: float
    a: float
    source: DipoleSource | PlaneWaveEm
    a_nm: np.ndarray
    b_nm: np.ndarray
    trunc_certificate: float

    @property
    def n_max(self) -> int:
        return self.a_nm.shape[0] - 1

    def incident(self, x):
        x0 = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x0)
        if isinstance(self.source, DipoleSource):
            out = np.stack(
                [dipole_matrix(self.k, p, self.source.y).e @ self.source.p for p in pts]
            )
        else:
            d, p = self.source.d, self.source.p
            pol = 1j * self.k * np.cross(np.cross(d, p), d)
            out = np.exp(1j * self.k * (pts @ d))[:, None] * pol[None, :]
        return out[0] if x0.ndim == 1 else out

    def scattered(self, x):
        return self._eval(x, part="E")

    def scattered_H(self, x):
        return self._eval(x, part="H")

    def total(self, x):
        return self.incident(x) + self.scattered(x)

    def _eval(self, x, part: str):
        x0 = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x0)
        if np.any(np.linalg.norm(pts, axis=-1) < self.a * (1 - 1e-12)):
            raise DomainError("evaluation point inside the obstacle")
        if part == "E":
            out = _vswf_sum(self.k, self.a_nm, self.b_nm, pts, "h")
        else:  # H^s = -i (a N + b M): swap coefficient roles
            out = -1j * _vswf_sum(self.k, self.b_nm, self.a_nm, pts, "h")
        return out[0] if x0.ndim == 1 else out

    def to_json(self) -> str:
        """Export as JSON: k, obstacle radius, source, M/N coefficients."""
        if isinstance(self.source, DipoleSource):
            src = {"kind": "dipole", "y": [float(v) for v in self.source.y],
                   "p": [float(v) for v in self.source.p], "tau": self.source.tau}
        else:
            src = {"kind": "plane_wave", "d": [float(v) for v in self.source.d],
                   "p": [float(v) for v in self.source.p]}
        return json.dumps(
            {
                "k": self.k,
                "a": self.a,
                "source": src,
                "M_coeffs": [[c.real, c.imag] for c in self.a_nm.ravel()],
                "N_coeffs": [[c.real, c.imag] for c in self.b_nm.ravel()],
                "n_max": self.n_max,
                "trunc_certificate": self.trunc_certificate,
            },
            sort_keys=True,
        )

    def far(self, xhat):
        """Electric far-field pattern: lim r e^{-ikr} E_s(r xhat); E_far . xhat = 0."""
        x0 = np.asarray(xhat, dtype=float)
        pts = np.atleast_2d(x0)
        _, ct, st, phi, e_r, e_t, e_p = _frames(pts)
        n_max = self.n_max
        ang = _AngTables(n_max, ct, st, phi)
        vt = np.zeros(pts.shape[0], dtype=complex)
        vp = np.zeros(pts.shape[0], dtype=complex)
        for n in range(1, n_max + 1):
            ph_m = (-1j) ** (n + 1)
            ph_n = (-1j) ** n
            am = self.a_nm[n, n_max - n : n_max + n + 1]
            bm = self.b_nm[n, n_max - n : n_max + n + 1]
            if not (np.any(am) or np.any(bm)):
                continue
            _, av, bv = ang.yab_all(n)
            vt += ph_m * (am @ bv) + ph_n * (bm @ av)
            vp += -ph_m * (am @ av) + ph_n * (bm @ bv)
        out = (vt[:, None] * e_t + vp[:, None] * e_p) / self.k
        return out[0] if x0.ndim == 1 else out


def _pec_reflection(k: float, a: float, n_max: int):
    j, y, jp, yp = _sph_jy_table(n_max, np.asarray([k * a]))
    h = (j + 1j * y)[:, 0]
    hp = (jp + 1j * yp)[:, 0]
    j, jp = j[:, 0], jp[:, 0]
    rho = k * a
    r_m = -j / h
    r_n = -(j + rho * jp) / (h + rho * hp)
    return r_m, r_n


def _dipole_incident_coeffs(k: float, src: DipoleSource, n_max: int):
    """Expansion of E_inc(., y) p in regular M/N about the origin (|x| < |y|)."""
    y = src.y
    ry = np.linalg.norm(y)
    rho_y = np.asarray([k * ry])
    r, ct, st, phi, e_r, e_t, e_p = _frames(y[None, :])
    ang = _AngTables(n_max, ct, st, phi)
    h, gh = _radial_tables(n_max, rho_y, "h")
    pr = float(e_r[0] @ src.p)
    pt = float(e_t[0] @ src.p)
    pp = float(e_p[0] @ src.p)
    a_inc = np.zeros((n_max + 1, 2 * n_max + 1), dtype=complex)
    b_inc = np.zeros_like(a_inc)
    for n in range(1, n_max + 1):
        nn1 = n * (n + 1)
        for m in range(-n, n + 1):
            yv, av, bv = ang.yab(n, m)
            yc, ac, bc = np.conj(yv[0]), np.conj(av[0]), np.conj(bv[0])
            q_m = h[n, 0] * (bc * pt - ac * pp)
            q_n = (nn1 / rho_y[0]) * h[n, 0] * yc * pr + gh[n, 0] * (ac * pt + bc * pp)
            a_inc[n, m + n_max] = -(k**2) * q_m / nn1
            b_inc[n, m + n_max] = -(k**2) * q_n / nn1
    return a_inc, b_inc


def _plane_incident_coeffs(k: float, pw: PlaneWaveEm, n_max: int):
    """Expansion of ik (d x p) x d e^{ik x.d} in regular M/N."""
    md = -pw.d
    r, ct, st, phi, e_r, e_t, e_p = _frames(md[None, :])
    ang = _AngTables(n_max, ct, st, phi)
    pt = float(e_t[0] @ pw.p)
    pp = float(e_p[0] @ pw.p)
    a_inc = np.zeros((n_max + 1, 2 * n_max + 1), dtype=complex)
    b_inc = np.zeros_like(a_inc)
    for n in range(1, n_max + 1):
        nn1 = n * (n + 1)
        for m in range(-n, n + 1):
            _, av, bv = ang.yab(n, m)
            ac, bc = np.conj(av[0]), np.conj(bv[0])
            a_inc[n, m + n_max] = 4 * np.pi * k * (-1j) ** (n + 1) * (ac * pp - bc * pt) / nn1
            b_inc[n, m + n_max] = -4 * np.pi * k * (-1j) ** n * (ac * pt + bc * pp) / nn1
    return a_inc, b_inc


def _solve_pec(cfg, a: float, source, coeff_fn, reach: float) -> EmField:
    k = cfg.k
    n0 = int(np.ceil(k * max(a, reach))) + 12 + int(np.ceil(4 * (k * a) ** (1 / 3)))
    n_max = n0
    while True:
        a_inc, b_inc = coeff_fn(k, source, n_max)
        r_m, r_n = _pec_reflection(k, a, n_max)
        a_s = a_inc * r_m[:, None]
        b_s = b_inc * r_n[:, None]
        f, g = _radial_tables(n_max, np.asarray([k * a]), "h")
        s_n = np.sqrt(np.arange(n_max + 1) * (np.arange(n_max + 1) + 1.0))
        t = np.maximum(
            np.max(np.abs(a_s), axis=1) * np.abs(f[:, 0]),
            np.max(np.abs(b_s), axis=1) * np.abs(g[:, 0]),
        ) * s_n
        peak = np.max(t)
        cert = t[-1] / peak if peak > 0 else 0.0
        if cert < TRUNC_TARGET or n_max >= n0 + _N_CAP:
            break
        n_max += _N_EXTEND
    return EmField(
        k=k, a=a, source=source, a_nm=a_s, b_nm=b_s, trunc_certificate=float(cert)
    )


def solve_pec_sphere_dipole(cfg, a: float, src: DipoleSource) -> EmField:
    """Scattering of an active electric dipole by the PEC sphere of radius a."""
    ry = float(np.linalg.norm(src.y))
    if ry <= a:
        raise DomainError(f"dipole at |y|={ry:.4g} lies inside the obstacle")
    if src.tau != 1:
        raise DomainError("solve_pec_sphere_dipole needs an active source (tau = 1)")
    if a >= cfg.R1:
        raise DomainError(f"obstacle radius {a} not inside R1={cfg.R1}")
    return _solve_pec(cfg, a, src, _dipole_incident_coeffs, ry)


def solve_pec_sphere_plane_wave(cfg, a: float, d, p) -> EmField:
    """Scattering of the plane wave E_inc = ik (d x p) x d e^{ik x.d}."""
    if a >= cfg.R1:
        raise DomainError(f"obstacle radius {a} not inside R1={cfg.R1}")
    pw = PlaneWaveEm(d=np.asarray(d, float), p=np.asarray(p, float))
    return _solve_pec(cfg, a, pw, _plane_incident_coeffs, a)


def superposed_electric_total(f1: EmField, f2: EmField, x) -> np.ndarray:
    """tau1 E(x, y1) p1 + tau2 E(x, y2) p2 for two dipole fields."""
    if f1.k != f2.k or f1.a != f2.a:
        raise DomainError("superposed fields must share wavenumber and obstacle")
    acc = np.zeros(3, dtype=complex)
    for f in (f1, f2):
        tau = f.source.tau if isinstance(f.source, DipoleSource) else 1
        if tau:
            acc = acc + f.total(x)
    return acc


def tangential_measurement(e_total: np.ndarray, frame: TangentFrame, m: str) -> complex:
    """Tangential component e_m(x) . E at a non-pole measurement point.

    Callers take the modulus for phaseless data.
    """
    if m == "phi":
        return complex(frame.e_phi @ np.asarray(e_total))
    if m == "theta":
        return complex(frame.e_theta @ np.asarray(e_total))
    raise DomainError(f"tangential orientation must be 'phi' or 'theta', got {m!r}")


def em_far_field(f: EmField, xhat) -> np.ndarray:
    return f.far(xhat)


def silver_muller_residual(f: EmField, r: float, xhat) -> float:
    """|H_s x x - r E_s| at x = r xhat; decays O(1/r) for radiating fields."""
    xhat = np.asarray(xhat, dtype=float)
    x = r * xhat
    e = f.scattered(x)
    h = f.scattered_H(x)
    return float(np.linalg.norm(np.cross(h, x) - r * e))


@dataclass(eq=False)
class SingularityProbe:
    """Approach table of a tangential dipole channel along its circle."""

    kind: str
    angle: np.ndarray
    r: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    ratio: np.ndarray
    truncated: bool

    def fitted_slope(self) -> float:
        """Log-log slope of |measured| against r (expected -3)."""
        lr = np.log(self.r)
        lm = np.log(np.abs(self.measured))
        return float(np.polyfit(lr, lm, 1)[0])


def singularity_probe(kind: str, k: float, y: SpherePoint, approach_angles) -> SingularityProbe:
    """Probe the near-source behavior of a tangential dipole channel.

    phi_phi: measured = e_phi(x) . E_inc(x, y) e_phi(y) along the circle with
    normal e_phi(y); the ratio to the predicted leading term
    (i/k)[k^2 + (ik - 1/s)/s] Phi_k tends to 1.

    phi_theta: measured = e_phi(x) . E_inc(x, y) e_theta(y) along the circle
    with normal (e_phi + e_theta)/sqrt(2); the ratio to Phi_k / s^2 tends to a
    nonzero constant, so |measured| 4 pi s^3 stabilizes.
    """
    if y.is_pole:
        raise DomainError("probe source must not sit at a pole")
    angles = np.asarray(sorted(approach_angles, reverse=True), dtype=float)
    frame_y = tangent_frame(y)
    if kind == "phi_phi":
        normal = frame_y.e_phi
        pol = frame_y.e_phi
    elif kind == "phi_theta":
        normal = (frame_y.e_phi + frame_y.e_theta) / np.sqrt(2.0)
        pol = frame_y.e_theta
    else:
        raise DomainError(f"unknown probe kind {kind!r}")
    keep = angles * y.r >= 1e-8 * y.r  # chord ~ r * angle
    truncated = not np.all(keep)
    angles = angles[keep]
    rows_meas, rows_pred, rows_r = [], [], []
    for t in angles:
        x_pt = great_circle(y, normal, 1, float(t))[0]
        x = x_pt.cart
        s = float(np.linalg.norm(x - y.cart))
        em = dipole_matrix(k, x, y.cart).e
        meas = complex(tangent_frame(x_pt).e_phi @ (em @ pol))
        phi_val = np.exp(1j * k * s) / (4 * np.pi * s)
        if kind == "phi_phi":
            pred = (1j / k) * (k**2 + (1j * k - 1.0 / s) / s) * phi_val
        else:
            pred = phi_val / s**2
        rows_meas.append(meas)
        rows_pred.append(pred)
        rows_r.append(s)
    meas = np.array(rows_meas)
    pred = np.array(rows_pred)
    return SingularityProbe(
        kind=kind,
        angle=angles,
        r=np.array(rows_r),
        measured=meas,
        predicted=pred,
        ratio=meas / pred,
        truncated=truncated,
    )
