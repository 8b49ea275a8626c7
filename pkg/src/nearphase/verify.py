"""Executable identity checks: reciprocity, mixed reciprocity, nonvanishing
witnesses, and the distinct-scatterers-give-distinct-data premise.

Probe points and directions come from a seeded Halton sequence, so every
report is reproducible bit-for-bit from (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import minimum_filter
from scipy.stats import qmc

from .acoustic import (
    AcousticConfig,
    MediumSample,
    SphereScatterer,
    far_field,
    solve_medium_ls_many,
    solve_sphere_plane_wave,
    solve_sphere_point_source,
)
from .em import (
    DipoleSource,
    em_far_field,
    solve_pec_sphere_dipole,
    solve_pec_sphere_plane_wave,
)
from .errors import DomainError
from .geometry import SphereGrid
from .phaseless import PhaselessDataset, synthesize_acoustic

SERIES_RECIPROCITY_TOL = 1e-10
LS_RECIPROCITY_TOL = 1e-6
EM_RECIPROCITY_TOL = 1e-8
MIXED_RECIPROCITY_TOL = 1e-7
NONVANISHING_FLOOR = 1e-3
DISTINCTNESS_FLOOR = 1e-4  # harness constant; uniqueness gives no quantitative floor


@dataclass(frozen=True)
class CheckReport:
    """One executed identity check; passed iff max_abs_error <= tolerance."""

    check_name: str
    config: str
    max_abs_error: float
    tolerance: float
    passed: bool
    sample_count: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "config": self.config,
            "max_abs_error": self.max_abs_error,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "sample_count": self.sample_count,
            "details": self.details,
        }


def _report(name, config, err, tol, count, details=None) -> CheckReport:
    return CheckReport(
        check_name=name,
        config=config,
        max_abs_error=float(err),
        tolerance=float(tol),
        passed=bool(err <= tol),
        sample_count=int(count),
        details=details or {},
    )


def _halton(n: int, d: int, seed: int) -> np.ndarray:
    return qmc.Halton(d=d, seed=seed).random(n)


def _shell_points(n: int, r_lo: float, r_hi: float, seed: int) -> np.ndarray:
    """Low-discrepancy points in the radial shell, poles avoided."""
    u = _halton(n, 3, seed)
    theta = np.arccos(1 - 2 * (0.02 + 0.96 * u[:, 0]))
    phi = 2 * np.pi * u[:, 1]
    r = r_lo + (r_hi - r_lo) * u[:, 2]
    st = np.sin(theta)
    return np.stack(
        [r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)], axis=-1
    )


def _directions(n: int, seed: int) -> np.ndarray:
    p = _shell_points(n, 1.0, 1.0, seed)
    return p / np.linalg.norm(p, axis=-1)[:, None]


def check_acoustic_reciprocity(
    cfg: AcousticConfig,
    scatterer,
    pair_count: int,
    seed: int = 0,
    tolerance: float | None = None,
) -> CheckReport:
    """w_s(x, y) = w_s(y, x) over seeded exterior pairs, relative max norm."""
    pts = _shell_points(2 * pair_count, cfg.R1, cfg.R2, seed)
    xs, ys = pts[:pair_count], pts[pair_count:]
    if isinstance(scatterer, MediumSample):
        tol = LS_RECIPROCITY_TOL if tolerance is None else tolerance
        fields_y = solve_medium_ls_many(cfg, scatterer, list(ys))
        fields_x = solve_medium_ls_many(cfg, scatterer, list(xs))
        kind = "volume_potential"
    else:
        tol = SERIES_RECIPROCITY_TOL if tolerance is None else tolerance
        fields_y = [solve_sphere_point_source(cfg, scatterer, y) for y in ys]
        fields_x = [solve_sphere_point_source(cfg, scatterer, x) for x in xs]
        kind = "modal_series"
    err = 0.0
    for fx, fy, x, y in zip(fields_x, fields_y, xs, ys):
        a = fy.scattered(x)
        b = fx.scattered(y)
        err = max(err, abs(a - b) / max(abs(a), 1e-300))
    return _report(
        "acoustic_reciprocity", f"{kind}, k={cfg.k}, seed={seed}", err, tol, pair_count
    )


def check_mixed_reciprocity_acoustic(
    cfg: AcousticConfig,
    scatterer: SphereScatterer,
    n_dir: int = 8,
    n_point: int = 8,
    seed: int = 0,
    tolerance: float = MIXED_RECIPROCITY_TOL,
) -> CheckReport:
    """4 pi w_far(-d, z) = u_s(z, d) linking point-source and plane-wave solves."""
    dirs = _directions(n_dir, seed)
    pts = _shell_points(n_point, cfg.R1, cfg.R2, seed + 1)
    err = 0.0
    pw = [solve_sphere_plane_wave(cfg, scatterer, d) for d in dirs]
    ps = [solve_sphere_point_source(cfg, scatterer, z) for z in pts]
    for i, d in enumerate(dirs):
        for j, z in enumerate(pts):
            lhs = 4 * np.pi * far_field(ps[j], -d)
            rhs = pw[i].scattered(z)
            err = max(err, abs(lhs - rhs))
    return _report(
        "mixed_reciprocity_acoustic",
        f"bc={scatterer.bc}, k={cfg.k}, seed={seed}",
        err,
        tolerance,
        n_dir * n_point,
    )


def check_em_reciprocity(
    cfg: AcousticConfig,
    radius: float,
    pair_count: int,
    seed: int = 0,
    tolerance: float = EM_RECIPROCITY_TOL,
) -> CheckReport:
    """q . E_s(x, y) p = p . E_s(y, x) q (transpose reciprocity), relative."""
    pts = _shell_points(2 * pair_count, cfg.R1, cfg.R2, seed)
    pol = _directions(2 * pair_count, seed + 3)
    err = 0.0
    for i in range(pair_count):
        x, y = pts[i], pts[pair_count + i]
        p, q = pol[i], pol[pair_count + i]
        fy = solve_pec_sphere_dipole(cfg, radius, DipoleSource(y=y, p=p))
        fx = solve_pec_sphere_dipole(cfg, radius, DipoleSource(y=x, p=q))
        lhs = q @ fy.scattered(x)
        rhs = p @ fx.scattered(y)
        err = max(err, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return _report(
        "em_reciprocity", f"pec a={radius}, k={cfg.k}, seed={seed}",
        err, tolerance, pair_count,
    )


def check_em_mixed_reciprocity(
    cfg: AcousticConfig,
    radius: float,
    n_dir: int = 4,
    n_point: int = 4,
    seed: int = 0,
    tolerance: float = MIXED_RECIPROCITY_TOL,
) -> CheckReport:
    """4 pi E_far(-d, x) = [E_s(x, d)]^T through polarization pairings."""
    dirs = _directions(n_dir, seed)
    pts = _shell_points(n_point, cfg.R1, cfg.R2, seed + 1)
    pol = _directions(2 * max(n_dir, n_point), seed + 2)
    err = 0.0
    count = 0
    for i, d in enumerate(dirs):
        for j, x in enumerate(pts):
            p = pol[i]
            q = pol[n_dir + j]
            f_dip = solve_pec_sphere_dipole(cfg, radius, DipoleSource(y=x, p=p))
            f_pw = solve_pec_sphere_plane_wave(cfg, radius, d, q)
            lhs = 4 * np.pi * (q @ em_far_field(f_dip, -d))
            rhs = p @ f_pw.scattered(x)
            err = max(err, abs(lhs - rhs))
            count += 1
    return _report(
        "em_mixed_reciprocity", f"pec a={radius}, k={cfg.k}, seed={seed}",
        err, tolerance, count,
    )


def _witness_disc_radius(mat: np.ndarray, shape_x, shape_y, tol: float) -> int:
    """Largest grid-metric disc radius rho with a product window above tol.

    ``mat`` holds |w(x, y)| over flattened tensor grids; a disc of radius rho
    is the Chebyshev index ball on (theta, phi) with wraparound in phi.  The
    returned rho is the largest for which some pair of disc centers keeps the
    whole product window above tol (0 means only single points qualify, -1
    means none).
    """
    nt_x, np_x = shape_x
    nt_y, np_y = shape_y
    m4 = np.nan_to_num(mat.reshape(nt_x, np_x, nt_y, np_y), nan=np.inf)
    rho = -1
    while True:
        size = 2 * (rho + 1) + 1
        if size > min(nt_x, nt_y):
            break
        filt = minimum_filter(
            m4, size=(size, size, size, size),
            mode=("nearest", "wrap", "nearest", "wrap"),
        )
        if np.max(filt) > tol:
            rho += 1
        else:
            break
    return rho


def check_nonvanishing(
    ds: PhaselessDataset,
    floor: float = NONVANISHING_FLOOR,
    tol_amp: float | None = None,
) -> CheckReport:
    """Constructive witnesses that the sampled total fields do not vanish.

    Reports the largest modulus on the outer sphere for the fixed reference
    source and locates grid-metric discs U1 x U2 (inner pairs), U1' x U2'
    (outer pairs), and U1' x {y0} on which all sampled moduli exceed the
    amplitude floor.
    """
    if ds.mode != "acoustic":
        raise DomainError("nonvanishing check expects an acoustic dataset")
    a = ds.arrays
    if tol_amp is None:
        tol_amp = 1e-6 * ds.max_modulus()
    g1, g2 = ds.grids["r1"], ds.grids["r2"]
    y0 = int(ds.meta["y0_index"])
    shapes = {}
    for name, g in (("r1", g1), ("r2", g2)):
        nt = int(np.unique(g.theta).size)
        shapes[name] = (nt, len(g) // nt)

    def singles_matrix(sphere_x, sphere_y, n_x, n_y):
        sel = (
            (a["kind"] == 0)
            & (a["x_sphere"] == sphere_x)
            & (a["y_sphere"] == sphere_y)
        )
        m = np.full((n_x, n_y), np.nan)
        m[a["x_idx"][sel], a["y_idx"][sel]] = a["modulus"][sel]
        return m

    m11 = singles_matrix(1, 1, len(g1), len(g1))
    m22 = singles_matrix(2, 2, len(g2), len(g2))
    sel_2y0 = (a["kind"] == 0) & (a["x_sphere"] == 2) & (a["y_sphere"] == 1)
    m2y0 = np.full(len(g2), np.nan)
    m2y0[a["x_idx"][sel_2y0]] = a["modulus"][sel_2y0]

    max_outer = float(np.nanmax(m2y0))
    rho11 = _witness_disc_radius(m11, shapes["r1"], shapes["r1"], tol_amp)
    rho22 = _witness_disc_radius(m22, shapes["r2"], shapes["r2"], tol_amp)
    # U1' x {y0}: a disc on the outer grid where |w(x, y0)| stays above floor
    good = np.nan_to_num(m2y0, nan=np.inf) > tol_amp
    rho2y0 = -1
    nt2, np2 = shapes["r2"]
    g2d = good.reshape(nt2, np2)
    while True:
        size = 2 * (rho2y0 + 1) + 1
        if size > nt2:
            break
        filt = minimum_filter(
            g2d.astype(float), size=(size, size), mode=("nearest", "wrap")
        )
        if np.max(filt) > 0.5:
            rho2y0 += 1
        else:
            break
    witnesses = {"S1xS1": rho11, "S2xS2": rho22, "S2xy0": rho2y0}
    shortfalls = [floor - max_outer] + [0.0 if r >= 0 else 1.0 for r in witnesses.values()]
    return _report(
        "nonvanishing",
        f"y0_index={y0}, floor={floor}",
        max(shortfalls),
        0.0,
        len(ds),
        details={"max_modulus_outer_y0": max_outer, "witness_disc_radius": witnesses},
    )


def uniqueness_premise_witness(
    cfg: AcousticConfig,
    scatterer_a,
    scatterer_b,
    grid1: SphereGrid,
    grid2: SphereGrid,
    y0_index: int,
    floor: float = DISTINCTNESS_FLOOR,
) -> CheckReport:
    """Distinct scatterers must produce visibly distinct phaseless data.

    Synthesizes both datasets on identical grids and reports the max pointwise
    modulus difference; the check passes when it reaches the distinctness
    floor (a harness constant; exact-data uniqueness carries no quantitative
    stability bound).
    """
    ds_a = synthesize_acoustic(cfg, scatterer_a, grid1, grid2, y0_index)
    ds_b = synthesize_acoustic(cfg, scatterer_b, grid1, grid2, y0_index)
    diff = float(np.max(np.abs(ds_a.modulus - ds_b.modulus)))
    return _report(
        "uniqueness_premise_witness",
        f"k={cfg.k}, floor={floor}",
        floor - diff,
        0.0,
        len(ds_a),
        details={"max_difference": diff},
    )


def run_suite(reports: list[CheckReport]) -> tuple[bool, str]:
    """Render a human-readable table; returns (all_passed, table_text)."""
    lines = [
        f"{'check':32s} {'samples':>8s} {'max_error':>12s} {'tolerance':>12s} {'status':>8s}"
    ]
    ok = True
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        ok = ok and r.passed
        lines.append(
            f"{r.check_name:32s} {r.sample_count:8d} {r.max_abs_error:12.3e} "
            f"{r.tolerance:12.3e} {status:>8s}"
        )
    return ok, "\n".join(lines)


def reports_to_json(reports: list[CheckReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)
