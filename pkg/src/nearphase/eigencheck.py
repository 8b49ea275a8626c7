"""Shell eigenvalue certification via 2x2 spherical Bessel determinants.

The Dirichlet problem on the shell between radii R1 < R2 separates into
radial 2x2 systems det[[j_n(kR1), y_n(kR1)], [j_n(kR2), y_n(kR2)]]; the
Maxwell problem adds the companion system with entries f_n(kR) + kR f'_n(kR)
and runs over n >= 1 only.  k^2 is an eigenvalue exactly when one of these
determinants vanishes.

The certificate margin for each order is the determinant normalized by
k * |d(det)/dk|, a dimensionless first-order estimate of the relative
distance from k to the nearest root, which keeps orders comparable both in
the oscillatory regime (n < kR) and in the evanescent tail.  Orders far past
kR2 cannot contribute roots (the y_n growth dominates); a runtime check
confirms the cancellation measure of the determinant grows monotonically
over the last scanned orders.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .specfun import _sph_jy_table

DEFAULT_CERT_TOL = 1e-6


def _heuristic_n_max(k: float, R2: float) -> int:
    return int(np.ceil(k * R2)) + 10


@dataclass(frozen=True)
class ShellSpec:
    """Shell geometry and wavenumber for an eigenvalue-freeness scan."""

    R1: float
    R2: float
    k: float
    n_max: int | None = None

    def __post_init__(self):
        if not 0 < self.R1 < self.R2:
            raise DomainError(f"need 0 < R1 < R2, got R1={self.R1}, R2={self.R2}")
        if self.k <= 0:
            raise DomainError(f"wavenumber must be positive, got {self.k}")
        floor = _heuristic_n_max(self.k, self.R2)
        if self.n_max is not None and self.n_max < floor:
            raise DomainError(
                f"n_max={self.n_max} below the safe scan depth {floor}"
            )

    @property
    def scan_depth(self) -> int:
        return self.n_max if self.n_max is not None else _heuristic_n_max(self.k, self.R2)


def _tables(n_max: int, k: float, R1: float, R2: float):
    j, y, jp, yp = _sph_jy_table(n_max, np.array([k * R1, k * R2]))
    return j, y, jp, yp


def dirichlet_determinant(n: int, k: float, R1: float, R2: float) -> float:
    """det[[j_n(kR1), y_n(kR1)], [j_n(kR2), y_n(kR2)]].

    Zero exactly when k^2 is a mode-n Dirichlet eigenvalue of the shell.
    """
    if n < 0:
        raise DomainError(f"order must be >= 0, got {n}")
    j, y, _, _ = _tables(n, k, R1, R2)
    return float(j[n, 0] * y[n, 1] - y[n, 0] * j[n, 1])


def maxwell_determinants(n: int, k: float, R1: float, R2: float) -> tuple[float, float]:
    """The two Maxwell determinants (d_M, d_N) of order n >= 1.

    d_M is the Dirichlet matrix determinant (same matrix); d_N uses the
    entries f_n(kR) + kR f'_n(kR).  k^2 is a Maxwell eigenvalue of the shell
    iff d_M or d_N vanishes for some n >= 1.
    """
    if n < 1:
        raise DomainError(f"Maxwell determinants are defined for n >= 1, got {n}")
    j, y, jp, yp = _tables(n, k, R1, R2)
    rho = np.array([k * R1, k * R2])
    d_m = float(j[n, 0] * y[n, 1] - y[n, 0] * j[n, 1])
    a = j[n] + rho * jp[n]
    b = y[n] + rho * yp[n]
    d_n = float(a[0] * b[1] - b[0] * a[1])
    return d_m, d_n


def _scan(kind: str, k: float, R1: float, R2: float, n_max: int):
    """Per-order determinants, dk-derivatives, and cancellation measures.

    Returns (orders, det, det_dk, cancel) arrays.  kind selects the matrix
    family: 'dirichlet'/'maxwell_M' share the Bessel-value matrix (scan from
    n=0 resp. n=1), 'maxwell_N' uses the f + rho f' entries (n >= 1).
    """
    j, y, jp, yp = _tables(n_max, k, R1, R2)
    rho = np.array([k * R1, k * R2])
    R = np.array([R1, R2])
    ns = np.arange(n_max + 1)
    if kind in ("dirichlet", "maxwell_M"):
        a1, b1 = j[:, 0], y[:, 0]
        a2, b2 = j[:, 1], y[:, 1]
        da1, db1 = R[0] * jp[:, 0], R[0] * yp[:, 0]
        da2, db2 = R[1] * jp[:, 1], R[1] * yp[:, 1]
    elif kind == "maxwell_N":
        nn1 = ns[:, None] * (ns[:, None] + 1.0)
        a = j + rho * jp
        b = y + rho * yp
        # d/dk [f(kR) + kR f'(kR)] = R (n(n+1)/rho - rho) f(kR), via the ODE
        da = R * (nn1 / rho - rho) * j
        db = R * (nn1 / rho - rho) * y
        a1, b1, a2, b2 = a[:, 0], b[:, 0], a[:, 1], b[:, 1]
        da1, db1, da2, db2 = da[:, 0], db[:, 0], da[:, 1], db[:, 1]
    else:
        raise DomainError(f"unknown determinant family {kind!r}")
    det = a1 * b2 - b1 * a2
    det_dk = da1 * b2 + a1 * db2 - db1 * a2 - b1 * da2
    denom = np.abs(a1 * b2) + np.abs(b1 * a2)
    with np.errstate(invalid="ignore", divide="ignore"):
        cancel = np.where(denom > 0, np.abs(det) / np.where(denom > 0, denom, 1.0), 0.0)
    n_lo = 0 if kind == "dirichlet" else 1
    return ns[n_lo:], det[n_lo:], det_dk[n_lo:], cancel[n_lo:]


def _margins(kind, k, R1, R2, n_max):
    ns, det, det_dk, cancel = _scan(kind, k, R1, R2, n_max)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.abs(det) / np.maximum(k * np.abs(det_dk), 1e-300)
    return ns, np.minimum(m, 1.0), cancel


@dataclass(frozen=True)
class EigenCertificate:
    """Result of an eigenvalue-freeness scan over modal orders."""

    kind: str
    k: float
    R1: float
    R2: float
    n_max: int
    free: bool
    margin: float
    worst_n: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "k": self.k,
                "R1": self.R1,
                "R2": self.R2,
                "n_max": self.n_max,
                "free": self.free,
                "margin": self.margin,
                "worst_n": self.worst_n,
            },
            sort_keys=True,
        )


def certify_eigenvalue_free(
    spec: ShellSpec, kind: str, tol_cert: float = DEFAULT_CERT_TOL
) -> EigenCertificate:
    """Certify that k^2 is not a shell Dirichlet (or Maxwell) eigenvalue.

    Scans n = 0..n_max (Dirichlet) or 1..n_max over both Maxwell families,
    extending the scan until the determinant cancellation measure has grown
    monotonically over the last five orders (the tail where no root can
    hide).  free = (min margin > tol_cert).
    """
    if kind not in ("dirichlet", "maxwell"):
        raise DomainError(f"kind must be 'dirichlet' or 'maxwell', got {kind!r}")
    families = ["dirichlet"] if kind == "dirichlet" else ["maxwell_M", "maxwell_N"]
    n_max = spec.scan_depth
    for _ in range(20):
        tails_ok = True
        for fam in families:
            _, _, cancel = _margins(fam, spec.k, spec.R1, spec.R2, n_max)
            tail = cancel[-5:]
            if not np.all(np.diff(tail) >= -1e-12):
                tails_ok = False
        if tails_ok:
            break
        n_max += 5
    margin = np.inf
    worst = -1
    for fam in families:
        ns, m, _ = _margins(fam, spec.k, spec.R1, spec.R2, n_max)
        i = int(np.argmin(m))
        if m[i] < margin:
            margin = float(m[i])
            worst = int(ns[i])
    return EigenCertificate(
        kind=kind,
        k=spec.k,
        R1=spec.R1,
        R2=spec.R2,
        n_max=n_max,
        free=bool(margin > tol_cert),
        margin=margin,
        worst_n=worst,
    )


def find_eigen_k(
    n: int,
    R1: float,
    R2: float,
    kind: str,
    bracket: tuple[float, float],
    samples: int = 600,
) -> list[float]:
    """Roots of the order-n determinant inside a k bracket.

    Scans for sign changes on a uniform lattice and refines each by Brent's
    method.  Returns an empty list when no sign change occurs.
    """
    k_lo, k_hi = bracket
    if k_lo <= 0 or k_hi <= k_lo:
        raise DomainError(f"need 0 < k_lo < k_hi, got {bracket}")
    if kind == "dirichlet":
        f = lambda k: dirichlet_determinant(n, k, R1, R2)
    elif kind == "maxwell_M":
        f = lambda k: maxwell_determinants(n, k, R1, R2)[0]
    elif kind == "maxwell_N":
        f = lambda k: maxwell_determinants(n, k, R1, R2)[1]
    else:
        raise DomainError(f"unknown determinant family {kind!r}")
    ks = np.linspace(k_lo, k_hi, samples)
    vals = np.array([f(k) for k in ks])
    roots = []
    for i in range(samples - 1):
        if vals[i] == 0.0:
            roots.append(float(ks[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(float(brentq(f, ks[i], ks[i + 1], xtol=1e-14, rtol=1e-15)))
    if vals[-1] == 0.0:
        roots.append(float(ks[-1]))
    return roots


def shell_radial_matrix(n: int, k: float, R1: float, R2: float) -> np.ndarray:
    """The 2x2 radial collocation matrix of the shell Dirichlet problem."""
    j, y, _, _ = _tables(n, k, R1, R2)
    return np.array([[j[n, 0], y[n, 0]], [j[n, 1], y[n, 1]]])
