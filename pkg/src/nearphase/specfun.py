"""Spherical special functions shared by every series solver and determinant check.

Provides spherical Bessel/Neumann tables with derivative companions, Legendre
polynomials, and orthonormal spherical harmonics.  Arguments are real: all
solver radii enter as k*r with real k and r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

_RESCALE = 1e250


def _sph_jy_table(n_max: int, x: np.ndarray):
    """Tables of j_n(x), y_n(x) and their derivatives for n = 0..n_max.

    Vectorized over x (positive reals).  Returns four arrays of shape
    (n_max + 1,) + x.shape.  y_n goes by upward recurrence (dominant solution,
    forward stable); j_n by upward recurrence where x >= n_max and by
    normalized downward recurrence elsewhere.
    """
    x = np.asarray(x, dtype=float)
    if n_max < 0:
        raise DomainError(f"n_max must be >= 0, got {n_max}")
    if np.any(x <= 0.0):
        raise DomainError("spherical Bessel argument must be positive")

    # internally build one extra order so derivatives exist at n_max = 0
    n_top = max(n_max, 1)
    shape = (n_top + 1,) + x.shape
    sin_x, cos_x = np.sin(x), np.cos(x)

    # orders far past the underflow point of j_n may overflow y_n to inf;
    # modal_table flags the first underflowed order instead of raising
    y = np.empty(shape)
    with np.errstate(over="ignore", invalid="ignore"):
        y[0] = -cos_x / x
        y[1] = -cos_x / x**2 - sin_x / x
        for n in range(2, n_top + 1):
            y[n] = (2 * n - 1) / x * y[n - 1] - y[n - 2]

    j = np.empty(shape)
    j0 = sin_x / x
    j1 = sin_x / x**2 - cos_x / x
    up = x >= n_top
    if np.any(up):
        xu = x[up]
        j[0, up] = j0[up]
        j[1, up] = j1[up]
        for n in range(2, n_top + 1):
            j[n, up] = (2 * n - 1) / xu * j[n - 1, up] - j[n - 2, up]
    down = ~up
    if np.any(down):
        j[:, down] = _sph_j_downward(n_top, x[down], j0[down], j1[down])

    jp = np.empty(shape)
    yp = np.empty(shape)
    with np.errstate(over="ignore", invalid="ignore"):
        jp[0] = -j[1]
        yp[0] = -y[1]
        for n in range(1, n_top + 1):
            jp[n] = j[n - 1] - (n + 1) / x * j[n]
            yp[n] = y[n - 1] - (n + 1) / x * y[n]

    k = n_max + 1
    return j[:k], y[:k], jp[:k], yp[:k]


def _sph_j_downward(n_max: int, x: np.ndarray, j0: np.ndarray, j1: np.ndarray):
    """j_n(x) for n = 0..n_max by downward recurrence, vectorized over x.

    Starts well above n_max and rescales on the fly to dodge overflow; the raw
    column is normalized against whichever of j_0, j_1 is larger in magnitude
    (they share no zeros).  The overflow check runs every few steps: the
    growth per step is bounded by (2 start + 1) / min(x), so the interval is
    sized to keep values below 1e308 between checks.
    """
    start = n_max + max(20, int(np.ceil(np.sqrt(60.0 * (n_max + 1)))))
    out = np.zeros((n_max + 1,) + x.shape)
    f_up = np.zeros_like(x)          # f_{n+1}
    f_cur = np.full_like(x, 1e-300)  # f_n at n = start
    growth = (2 * start + 1) / float(np.min(x))
    interval = max(1, int(57.0 / np.log10(growth + 10.0)))
    since_check = 0
    for n in range(start, 0, -1):
        if n <= n_max:
            out[n] = f_cur
        f_down = (2 * n + 1) / x * f_cur - f_up
        f_up, f_cur = f_cur, f_down
        since_check += 1
        if since_check >= interval:
            since_check = 0
            big = np.abs(f_cur) > _RESCALE
            if np.any(big):
                f_cur[big] /= _RESCALE
                f_up[big] /= _RESCALE
                if n <= n_max + 1:
                    out[max(n, 0):, big] /= _RESCALE
    out[0] = f_cur
    use0 = np.abs(j0) >= np.abs(j1)
    ratio = np.where(use0, j0, j1) / np.where(use0, out[0], out[1])
    return out * ratio


@dataclass(frozen=True)
class ModalTable:
    """Per-order spherical Bessel/Neumann values with derivative companions.

    Satisfies the Wronskian identity j_n y'_n - j'_n y_n = 1/x^2 for every
    stored order.  ``underflow_order`` flags the first order (if any) at which
    j_n underflowed to exactly zero; values are still returned.
    """

    order_max: int
    argument: float
    j: np.ndarray
    y: np.ndarray
    jp: np.ndarray
    yp: np.ndarray
    underflow_order: int | None = field(default=None)

    @property
    def h(self) -> np.ndarray:
        """Outgoing spherical Hankel values h_n^(1)(x) = j_n + i y_n."""
        return self.j + 1j * self.y

    @property
    def hp(self) -> np.ndarray:
        return self.jp + 1j * self.yp

    def wronskian_residual(self) -> float:
        """Max relative departure of j y' - j' y from 1/x^2 over stored orders."""
        target = 1.0 / self.argument**2
        w = self.j * self.yp - self.jp * self.y
        return float(np.max(np.abs(w - target)) / target)


def modal_table(n_max: int, x: float) -> ModalTable:
    """Evaluate j_n, y_n and derivatives at a positive real argument.

    Raises DomainError for x <= 0.  Orders large enough for j_n to underflow
    to zero are flagged through ``underflow_order`` rather than raised.
    """
    if x <= 0.0 or not np.isfinite(x):
        raise DomainError(f"modal_table requires x > 0, got {x}")
    j, y, jp, yp = _sph_jy_table(n_max, np.asarray([float(x)]))
    j, y, jp, yp = j[:, 0], y[:, 0], jp[:, 0], yp[:, 0]
    underflow = np.nonzero(j == 0.0)[0]
    return ModalTable(
        order_max=n_max,
        argument=float(x),
        j=j,
        y=y,
        jp=jp,
        yp=yp,
        underflow_order=int(underflow[0]) if underflow.size else None,
    )


def legendre(n_max: int, t):
    """Legendre polynomials P_0..P_n_max at t (scalar or array), |t| <= 1."""
    t_arr = np.asarray(t, dtype=float)
    if n_max < 0:
        raise DomainError(f"n_max must be >= 0, got {n_max}")
    if np.any(np.abs(t_arr) > 1.0):
        raise DomainError("Legendre argument must lie in [-1, 1]")
    p = np.empty((n_max + 1,) + t_arr.shape)
    p[0] = 1.0
    if n_max >= 1:
        p[1] = t_arr
    for n in range(1, n_max):
        p[n + 1] = ((2 * n + 1) * t_arr * p[n] - n * p[n - 1]) / (n + 1)
    return p


def norm_legendre_table(n_max: int, costheta: np.ndarray, sintheta: np.ndarray | None = None):
    """Fully normalized associated Legendre values and theta-derivatives.

    Returns (pbar, dpbar_dtheta), each of shape (n_max+1, n_max+1) + x.shape,
    indexed [n, m] for 0 <= m <= n (entries with m > n are zero).  The
    normalization is the orthonormal spherical-harmonic one with the
    Condon-Shortley phase: Y_n^m = pbar[n, m] * exp(i m phi).

    Pass sintheta when it is known directly; recovering it from costheta
    loses half the significant digits near the poles.  The derivative uses
    sin(theta) in a denominator, so callers must stay off the poles;
    measurement grids exclude them by construction.
    """
    x = np.asarray(costheta, dtype=float)
    if sintheta is not None:
        s = np.asarray(sintheta, dtype=float)
    else:
        s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))  # sin(theta) >= 0
    pbar = np.zeros((n_max + 1, n_max + 1) + x.shape)
    pbar[0, 0] = np.broadcast_to(np.sqrt(1.0 / (4.0 * np.pi)), x.shape)
    for m in range(1, n_max + 1):
        pbar[m, m] = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * pbar[m - 1, m - 1]
    for m in range(0, n_max):
        pbar[m + 1, m] = np.sqrt(2 * m + 3.0) * x * pbar[m, m]
    for m in range(0, n_max + 1):
        for n in range(m + 2, n_max + 1):
            a = np.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
            b = np.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
            pbar[n, m] = a * (x * pbar[n - 1, m] - b * pbar[n - 2, m])

    dpbar = np.zeros_like(pbar)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_s = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), np.inf)
        for m in range(0, n_max + 1):
            for n in range(m, n_max + 1):
                if n == 0:
                    continue
                e = np.sqrt((n * n - m * m) * (2 * n + 1.0) / (2 * n - 1.0))
                prev = pbar[n - 1, m] if n - 1 >= m else 0.0
                dpbar[n, m] = (n * x * pbar[n, m] - e * prev) * inv_s
    return pbar, dpbar


def sph_harmonic(n: int, m: int, theta: float, phi: float) -> complex:
    """Orthonormal spherical harmonic Y_n^m(theta, phi).

    Convention: integral over the unit sphere of Y_n^m conj(Y_n'^m') is the
    Kronecker delta; Condon-Shortley phase included.
    """
    if abs(m) > n:
        raise DomainError(f"sph_harmonic requires |m| <= n, got n={n}, m={m}")
    if not 0.0 <= theta <= np.pi:
        raise DomainError(f"theta must lie in [0, pi], got {theta}")
    pbar, _ = norm_legendre_table(n, np.asarray(np.cos(theta)))
    val = pbar[n, abs(m)] * np.exp(1j * abs(m) * phi)
    if m < 0:
        val = (-1) ** (abs(m) % 2) * np.conj(val)
    return complex(val)
