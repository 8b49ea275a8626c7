"""Two-sphere phaseless datasets and the constructive recovery machinery.

Synthesis produces |total field| samples over the index sets of the two-sphere
measurement scheme: acoustic single-source moduli on (S1 x S1) and
(S2 x ({y0} u S2)), superposed moduli |w(x; y, y0)| on both sphere pairs, and
the electromagnetic tangential-channel analogues driven by e_phi/e_theta
dipole pairs with activation flags.

Recovery inverts the superposition algebra: |w1 + w2|^2 - |w1|^2 - |w2|^2
exposes Re{w1 conj(w2)}, whose normalization is the cosine of the phase
difference.  classify_branch separates the identity branch from the conjugate
branch at field level, and conjugate_discriminator eliminates the conjugate
branch by checking that it would force a non-radiating total field (boundary
traces of w1 - conj(w2) vanish on both spheres => the shell solution vanishes
=> the candidate's implied scattered part must satisfy the radiation
condition, which a conjugated field cannot).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acoustic import (
    AcousticConfig,
    AcousticField,
    MediumSample,
    SphereScatterer,
    fundamental_solution,
    _fundamental_dr,
    solve_medium_ls_many,
    solve_sphere_point_source,
)
from .eigencheck import ShellSpec, certify_eigenvalue_free, shell_radial_matrix
from .em import DipoleSource, solve_pec_sphere_dipole
from .errors import (
    DomainError,
    IllPosedConfigError,
    InconsistentDataError,
    InsufficientDataError,
)
from .geometry import SphereGrid, sphere_grid
from .specfun import _sph_jy_table, norm_legendre_table

TOL_AMP_FACTOR = 1e-10
COS_CLAMP_TOL = 1e-9
COS_ERROR_TOL = 1e-6

_POL_NAMES = ("phi", "theta")


# --------------------------------------------------------------------------
# dataset container and serialization


@dataclass(eq=False)
class PhaselessDataset:
    """Struct-of-arrays container for phaseless samples plus grid metadata.

    Acoustic arrays: kind (0 single / 1 superposed), x_sphere, x_idx,
    y_sphere, y_idx, modulus.  EM arrays: set_id (1 for the S1^3 set, 2 for
    the S1^2 x S2 set), m/n/l polarization labels (0 phi / 1 theta), tau1,
    tau2, x_idx, y1_idx, y2_idx, modulus.
    """

    mode: str
    meta: dict
    arrays: dict
    grids: dict  # name -> SphereGrid

    def __len__(self) -> int:
        return int(self.arrays["modulus"].size)

    @property
    def modulus(self) -> np.ndarray:
        return self.arrays["modulus"]

    def max_modulus(self) -> float:
        return float(np.max(self.arrays["modulus"]))

    def _point_spherical(self, sphere: int, idx: int):
        g = self.grids["r1" if sphere == 1 else "r2"]
        return [g.radius, float(g.theta[idx]), float(g.phi[idx])]

    def record(self, i: int) -> dict:
        a = self.arrays
        if self.mode == "acoustic":
            kind = int(a["kind"][i])
            x_ref = [int(a["x_sphere"][i]), int(a["x_idx"][i])]
            y_ref = [int(a["y_sphere"][i]), int(a["y_idx"][i])]
            rec = {
                "type": "sample",
                "kind": "superposed" if kind else "single",
                "x": self._point_spherical(*x_ref),
                "x_ref": x_ref,
                "sources": [self._point_spherical(*y_ref)],
                "src_ref": [y_ref],
                "tau": [1, 1] if kind else [1],
                "pol": None,
                "modulus": float(a["modulus"][i]),
            }
            if kind:
                y0_ref = [1, int(self.meta["y0_index"])]
                rec["sources"].append(self._point_spherical(*y0_ref))
                rec["src_ref"].append(y0_ref)
            return rec
        set_id = int(a["set_id"][i])
        y2_sphere = 1 if set_id == 1 else 2
        x_ref = [1, int(a["x_idx"][i])]
        y1_ref = [1, int(a["y1_idx"][i])]
        y2_ref = [y2_sphere, int(a["y2_idx"][i])]
        return {
            "type": "sample",
            "kind": f"set{set_id}",
            "x": self._point_spherical(*x_ref),
            "x_ref": x_ref,
            "sources": [self._point_spherical(*y1_ref), self._point_spherical(*y2_ref)],
            "src_ref": [y1_ref, y2_ref],
            "tau": [int(a["tau1"][i]), int(a["tau2"][i])],
            "pol": [
                _POL_NAMES[a["m"][i]],
                _POL_NAMES[a["n"][i]],
                _POL_NAMES[a["l"][i]],
            ],
            "modulus": float(a["modulus"][i]),
        }

    def header(self) -> dict:
        grids = {
            name: {
                "radius": g.radius,
                "theta": [float(t) for t in g.theta],
                "phi": [float(p) for p in g.phi],
                "weights": None if g.weights is None else [float(w) for w in g.weights],
            }
            for name, g in self.grids.items()
        }
        return {"type": "header", "mode": self.mode, "meta": self.meta, "grids": grids,
                "count": len(self)}

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header(), sort_keys=True) + "\n")
            for i in range(len(self)):
                fh.write(json.dumps(self.record(i), sort_keys=True) + "\n")

    def to_csv(self, path) -> None:
        a = self.arrays
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.mode == "acoustic":
                w.writerow(
                    ["kind", "x_sphere", "x_idx", "x_theta", "x_phi",
                     "y_sphere", "y_idx", "y_theta", "y_phi", "modulus"]
                )
                for i in range(len(self)):
                    x = self._point_spherical(int(a["x_sphere"][i]), int(a["x_idx"][i]))
                    y = self._point_spherical(int(a["y_sphere"][i]), int(a["y_idx"][i]))
                    w.writerow(
                        [int(a["kind"][i]), int(a["x_sphere"][i]), int(a["x_idx"][i]),
                         repr(x[1]), repr(x[2]), int(a["y_sphere"][i]),
                         int(a["y_idx"][i]), repr(y[1]), repr(y[2]),
                         repr(float(a["modulus"][i]))]
                    )
            else:
                w.writerow(
                    ["set_id", "m", "n", "l", "tau1", "tau2",
                     "x_idx", "y1_idx", "y2_idx", "modulus"]
                )
                for i in range(len(self)):
                    w.writerow(
                        [int(a["set_id"][i]), _POL_NAMES[a["m"][i]],
                         _POL_NAMES[a["n"][i]], _POL_NAMES[a["l"][i]],
                         int(a["tau1"][i]), int(a["tau2"][i]), int(a["x_idx"][i]),
                         int(a["y1_idx"][i]), int(a["y2_idx"][i]),
                         repr(float(a["modulus"][i]))]
                    )

    @classmethod
    def from_jsonl(cls, path) -> "PhaselessDataset":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise ValueError("empty dataset file")
        header = json.loads(lines[0])
        if header.get("type") != "header":
            raise ValueError("first record must be the dataset header")
        grids = {}
        for name, g in header["grids"].items():
            grids[name] = SphereGrid(
                radius=float(g["radius"]),
                theta=np.asarray(g["theta"], dtype=float),
                phi=np.asarray(g["phi"], dtype=float),
                weights=None if g["weights"] is None else np.asarray(g["weights"]),
            )
        mode = header["mode"]
        records = [json.loads(ln) for ln in lines[1:] if ln.strip()]
        if len(records) != header["count"]:
            raise ValueError(
                f"dataset truncated: header promises {header['count']} samples, "
                f"found {len(records)}"
            )
        if mode == "acoustic":
            arrays = {
                "kind": np.array(
                    [1 if r["kind"] == "superposed" else 0 for r in records], np.uint8
                ),
                "x_sphere": np.array([r["x_ref"][0] for r in records], np.uint8),
                "x_idx": np.array([r["x_ref"][1] for r in records], np.int32),
                "y_sphere": np.array([r["src_ref"][0][0] for r in records], np.uint8),
                "y_idx": np.array([r["src_ref"][0][1] for r in records], np.int32),
                "modulus": np.array([r["modulus"] for r in records], float),
            }
        else:
            pol_idx = {"phi": 0, "theta": 1}
            arrays = {
                "set_id": np.array([int(r["kind"][3]) for r in records], np.uint8),
                "m": np.array([pol_idx[r["pol"][0]] for r in records], np.uint8),
                "n": np.array([pol_idx[r["pol"][1]] for r in records], np.uint8),
                "l": np.array([pol_idx[r["pol"][2]] for r in records], np.uint8),
                "tau1": np.array([r["tau"][0] for r in records], np.uint8),
                "tau2": np.array([r["tau"][1] for r in records], np.uint8),
                "x_idx": np.array([r["x_ref"][1] for r in records], np.int32),
                "y1_idx": np.array([r["src_ref"][0][1] for r in records], np.int32),
                "y2_idx": np.array([r["src_ref"][1][1] for r in records], np.int32),
                "modulus": np.array([r["modulus"] for r in records], float),
            }
        return cls(mode=mode, meta=header["meta"], arrays=arrays, grids=grids)


# --------------------------------------------------------------------------
# acoustic synthesis


def _map_jobs(fn, items, jobs: int):
    """Order-preserving map, threaded when jobs > 1 (results stay deterministic)."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _acoustic_total_table(cfg, scatterer, source_pts, eval_pts, jobs: int = 1):
    """Complex totals w(x_i, y_j) as a (n_src, n_eval) table; collisions nan."""
    if isinstance(scatterer, SphereScatterer):
        fields = _map_jobs(
            lambda y: solve_sphere_point_source(cfg, scatterer, y), source_pts, jobs
        )
    elif isinstance(scatterer, MediumSample):
        fields = solve_medium_ls_many(cfg, scatterer, list(source_pts))
    else:
        raise DomainError(f"unknown scatterer type {type(scatterer)!r}")

    def row(f):
        ws = f.scattered(eval_pts)
        d = np.linalg.norm(eval_pts - f.source, axis=-1)
        ok = d > 1e-12
        wi = np.full(eval_pts.shape[0], np.nan + 0j)
        wi[ok] = np.exp(1j * cfg.k * d[ok]) / (4 * np.pi * d[ok])
        return wi + ws

    out = np.stack(_map_jobs(row, fields, jobs))
    return out, fields


def synthesize_acoustic(
    cfg: AcousticConfig,
    scatterer,
    grid1: SphereGrid,
    grid2: SphereGrid,
    y0_index: int,
    include_y0_superposed_on_r2: bool = True,
    jobs: int = 1,
) -> PhaselessDataset:
    """Phaseless two-sphere dataset for a fixed reference source y0 on S1.

    Single-source moduli cover (S1 x S1) u (S2 x ({y0} u S2)); superposed
    moduli |w(x; y, y0)| cover (S1 x S1) u (S2 x S2); x = y and x = y0 index
    collisions are dropped.  With include_y0_superposed_on_r2 the S2 x {y0}
    superposed column (|w(x; y0, y0)| = 2|w(x, y0)|) is also emitted and the
    choice is flagged in the metadata.
    """
    cfg.check_contains(scatterer)
    if abs(grid1.radius - cfg.R1) > 1e-12 or abs(grid2.radius - cfg.R2) > 1e-12:
        raise DomainError("grid radii must match the configuration R1, R2")
    if not 0 <= y0_index < len(grid1):
        raise DomainError(f"y0 index {y0_index} outside grid1")
    g1, g2 = grid1.cart, grid2.cart
    n1, n2 = len(grid1), len(grid2)
    w11, _ = _acoustic_total_table(cfg, scatterer, g1, g1, jobs=jobs)
    w22, fields2 = _acoustic_total_table(cfg, scatterer, g2, g2, jobs=jobs)
    # reference source evaluated on the outer sphere
    if isinstance(scatterer, SphereScatterer):
        f_y0 = solve_sphere_point_source(cfg, scatterer, g1[y0_index])
    else:
        f_y0 = solve_medium_ls_many(cfg, scatterer, [g1[y0_index]])[0]
    w2y0 = f_y0.total(g2)

    blocks = []  # (kind, x_sphere, x_idx, y_sphere, y_idx, modulus) columns

    def emit_block(kind, x_sphere, x_idx, y_sphere, y_idx, values):
        count = x_idx.size
        blocks.append(
            (
                np.full(count, kind, np.uint8),
                np.full(count, x_sphere, np.uint8),
                x_idx.astype(np.int32),
                np.full(count, y_sphere, np.uint8),
                y_idx.astype(np.int32),
                np.abs(values),
            )
        )

    def pairs(n, extra_x_exclusion=None):
        """Source-major (y, x) index pairs with x != y (and one extra drop)."""
        jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        keep = ii != jj
        if extra_x_exclusion is not None:
            keep &= ii != extra_x_exclusion
        return jj[keep], ii[keep]

    j1, i1 = pairs(n1)  # singles S1 x S1
    emit_block(0, 1, i1, 1, j1, w11[j1, i1])
    emit_block(0, 2, np.arange(n2), 1, np.full(n2, y0_index), w2y0)  # S2 x {y0}
    j2, i2 = pairs(n2)  # singles S2 x S2
    emit_block(0, 2, i2, 2, j2, w22[j2, i2])
    j1s, i1s = pairs(n1, extra_x_exclusion=y0_index)  # superposed S1 x S1
    emit_block(1, 1, i1s, 1, j1s, w11[j1s, i1s] + w11[y0_index, i1s])
    emit_block(1, 2, i2, 2, j2, w22[j2, i2] + w2y0[i2])  # superposed S2 x S2
    if include_y0_superposed_on_r2:
        emit_block(1, 2, np.arange(n2), 1, np.full(n2, y0_index), 2 * w2y0)

    cols = [np.concatenate([b[c] for b in blocks]) for c in range(6)]
    arrays = {
        "kind": cols[0],
        "x_sphere": cols[1],
        "x_idx": cols[2],
        "y_sphere": cols[3],
        "y_idx": cols[4],
        "modulus": cols[5],
    }
    if isinstance(scatterer, SphereScatterer):
        sc_meta = {"kind": scatterer.bc, "radius": scatterer.radius,
                   "eta": [scatterer.eta.real, scatterer.eta.imag]}
    else:
        sc_meta = {"kind": "medium", "shape": list(scatterer.shape), "h": scatterer.h}
    meta = {
        "k": cfg.k,
        "R1": cfg.R1,
        "R2": cfg.R2,
        "scatterer": sc_meta,
        "y0_index": int(y0_index),
        "flags": {"includes_y0_superposed_on_r2": bool(include_y0_superposed_on_r2)},
    }
    return PhaselessDataset(
        mode="acoustic", meta=meta, arrays=arrays, grids={"r1": grid1, "r2": grid2}
    )


# --------------------------------------------------------------------------
# electromagnetic synthesis


def _em_tangential_table(cfg, radius, src_grid: SphereGrid, eval_grid: SphereGrid,
                         jobs: int = 1):
    """t[pol, j, m, i] = e_m(x_i) . E(x_i, y_j) e_pol(y_j); collisions nan."""
    n_src, n_eval = len(src_grid), len(eval_grid)
    eval_pts = eval_grid.cart
    frames = [eval_grid.frame(i) for i in range(n_eval)]
    e_m = np.stack(
        [np.stack([f.e_phi for f in frames]), np.stack([f.e_theta for f in frames])]
    )  # (2, n_eval, 3)
    same_grid = src_grid is eval_grid

    def channel(task):
        j, pol = task
        fy = src_grid.frame(j)
        pvec = fy.e_phi if pol == 0 else fy.e_theta
        f = solve_pec_sphere_dipole(cfg, radius, DipoleSource(y=src_grid.cart[j], p=pvec))
        ok = np.ones(n_eval, dtype=bool)
        if same_grid:
            ok[j] = False
        e_tot = np.full((n_eval, 3), np.nan + 0j)
        e_tot[ok] = f.total(eval_pts[ok])
        return np.einsum("mic,ic->mi", e_m, e_tot)

    tasks = [(j, pol) for j in range(n_src) for pol in (0, 1)]
    rows = _map_jobs(channel, tasks, jobs)
    out = np.empty((2, n_src, 2, n_eval), dtype=complex)
    for (j, pol), r in zip(tasks, rows):
        out[pol, j] = r
    return out


def synthesize_em(
    cfg: AcousticConfig,
    radius: float,
    grid1: SphereGrid,
    grid2: SphereGrid,
    jobs: int = 1,
) -> PhaselessDataset:
    """Phaseless EM dataset: tangential-channel moduli of superposed dipoles.

    Set 1 runs (x, y1, y2) over the inner grid cubed with polarizations
    (e_phi at y1, e_theta at y2), activations (1,0), (0,1), (1,1), and both
    receiver orientations.  Set 2 runs y2 over the outer grid with all
    polarization labels (n, l) and activations (0,1), (1,1).  Index
    collisions x = y1, x = y2 are dropped.
    """
    if radius >= cfg.R1:
        raise DomainError(f"obstacle radius {radius} not inside R1={cfg.R1}")
    for g in (grid1, grid2):
        if np.any(np.sin(g.theta) < 1e-12):
            raise DomainError("EM grids must exclude the poles")
    if abs(grid1.radius - cfg.R1) > 1e-12 or abs(grid2.radius - cfg.R2) > 1e-12:
        raise DomainError("grid radii must match the configuration R1, R2")
    n1, n2 = len(grid1), len(grid2)
    t1 = _em_tangential_table(cfg, radius, grid1, grid1, jobs=jobs)  # (pol, j, m, i)
    t2 = _em_tangential_table(cfg, radius, grid2, grid1, jobs=jobs)

    blocks = []

    def emit_block(sid, m, n, l, tau1, tau2, i, j1, j2, values):
        count = i.size
        blocks.append(
            (
                np.full(count, sid, np.uint8),
                np.full(count, m, np.uint8),
                np.full(count, n, np.uint8),
                np.full(count, l, np.uint8),
                np.full(count, tau1, np.uint8),
                np.full(count, tau2, np.uint8),
                i.astype(np.int32),
                j1.astype(np.int32),
                j2.astype(np.int32),
                np.abs(values),
            )
        )

    # set 1: (y1, y2, x) over the inner grid cubed, x != y1, y2
    g1j1, g1j2, g1i = np.meshgrid(
        np.arange(n1), np.arange(n1), np.arange(n1), indexing="ij"
    )
    keep1 = (g1i != g1j1) & (g1i != g1j2)
    j1f, j2f, i1f = g1j1[keep1], g1j2[keep1], g1i[keep1]
    for m in (0, 1):
        t_phi = t1[0, :, m, :]
        t_theta = t1[1, :, m, :]
        for tau1, tau2 in ((1, 0), (0, 1), (1, 1)):
            vals = tau1 * t_phi[j1f, i1f] + tau2 * t_theta[j2f, i1f]
            emit_block(1, m, 0, 1, tau1, tau2, i1f, j1f, j2f, vals)
    # set 2: y1, x on the inner grid (x != y1), y2 on the outer grid
    g2j1, g2j2, g2i = np.meshgrid(
        np.arange(n1), np.arange(n2), np.arange(n1), indexing="ij"
    )
    keep2 = g2i != g2j1
    j1g, j2g, i2g = g2j1[keep2], g2j2[keep2], g2i[keep2]
    for m in (0, 1):
        for n in (0, 1):
            for l in (0, 1):
                for tau1, tau2 in ((0, 1), (1, 1)):
                    vals = tau1 * t1[n, :, m, :][j1g, i2g] + tau2 * t2[l, :, m, :][j2g, i2g]
                    emit_block(2, m, n, l, tau1, tau2, i2g, j1g, j2g, vals)

    cols = [np.concatenate([b[c] for b in blocks]) for c in range(10)]
    arrays = {
        "set_id": cols[0],
        "m": cols[1],
        "n": cols[2],
        "l": cols[3],
        "tau1": cols[4],
        "tau2": cols[5],
        "x_idx": cols[6],
        "y1_idx": cols[7],
        "y2_idx": cols[8],
        "modulus": cols[9],
    }
    # Degenerate polarization channel report: a cross-sphere channel (m, l)
    # identically zero on the full product set would defeat phase recovery
    # on that channel; none is expected for a real scatterer.
    degenerate = []
    for m in (0, 1):
        for l in (0, 1):
            channel = np.abs(t2[l, :, m, :])
            if np.nanmax(channel) < 1e-14:
                degenerate.append([_POL_NAMES[m], _POL_NAMES[l]])
    meta = {
        "k": cfg.k,
        "R1": cfg.R1,
        "R2": cfg.R2,
        "scatterer": {"kind": "pec_sphere", "radius": radius},
        "flags": {"degenerate_channels": degenerate},
    }
    return PhaselessDataset(
        mode="em", meta=meta, arrays=arrays, grids={"r1": grid1, "r2": grid2}
    )


# --------------------------------------------------------------------------
# recovery operations


@dataclass(frozen=True)
class PhaseDiffRecord:
    """Recovered phase-difference data for one (x, y) pair (and channel)."""

    x: tuple
    y: tuple
    r_xy: float
    r_xy0: float
    real_cross: float
    cos_delta: float | None
    defined: bool
    channel: tuple | None = None


def recover_real_cross(m_sup: float, m1: float, m2: float) -> float:
    """Re{w(x,y) conj(w(x,y0))} from the three measured moduli.

    Pure arithmetic: (|w1 + w2|^2 - |w1|^2 - |w2|^2) / 2.
    """
    return 0.5 * (m_sup**2 - m1**2 - m2**2)


def recover_cos_delta(
    x, y, r_xy: float, r_xy0: float, real_cross: float, tol_amp: float,
    channel=None,
) -> PhaseDiffRecord:
    """Cosine of the phase difference, clamped and amplitude-gated.

    Records with either amplitude at or below tol_amp are marked undefined
    (nonvanishing open sets guarantee usable regions exist).  A cosine beyond
    1 + 1e-6 signals corrupted data and raises; overshoot within rounding is
    clamped to [-1, 1].
    """
    defined = r_xy > tol_amp and r_xy0 > tol_amp
    if not defined:
        return PhaseDiffRecord(x, y, r_xy, r_xy0, real_cross, None, False, channel)
    c = real_cross / (r_xy * r_xy0)
    if abs(c) > 1.0 + COS_ERROR_TOL:
        raise InconsistentDataError(
            f"|cos| = {abs(c):.6f} exceeds 1 beyond tolerance at x={x}, y={y}"
        )
    c = float(np.clip(c, -1.0, 1.0))
    return PhaseDiffRecord(x, y, r_xy, r_xy0, real_cross, c, True, channel)


em_recover_real_cross = recover_real_cross


def em_recover_cos_delta(x, y, r_mm: float, r_ml: float, real_cross: float,
                         tol_amp: float, channel) -> PhaseDiffRecord:
    """EM analogue of recover_cos_delta over tangential channel amplitudes."""
    return recover_cos_delta(x, y, r_mm, r_ml, real_cross, tol_amp, channel)


@dataclass(eq=False)
class PhaseDiffTable:
    """Vectorized collection of PhaseDiffRecords plus their identifiers."""

    x_ref: np.ndarray
    y_ref: np.ndarray
    r_xy: np.ndarray
    r_xy0: np.ndarray
    real_cross: np.ndarray
    cos_delta: np.ndarray  # nan where undefined
    defined: np.ndarray
    tol_amp: float
    channel: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.r_xy.size)

    def defined_fraction(self) -> float:
        return float(np.mean(self.defined))

    def record(self, i: int) -> PhaseDiffRecord:
        return PhaseDiffRecord(
            x=tuple(self.x_ref[i]),
            y=tuple(self.y_ref[i]),
            r_xy=float(self.r_xy[i]),
            r_xy0=float(self.r_xy0[i]),
            real_cross=float(self.real_cross[i]),
            cos_delta=None if not self.defined[i] else float(self.cos_delta[i]),
            defined=bool(self.defined[i]),
            channel=None if self.channel is None else tuple(self.channel[i]),
        )


def _pack_keys(*cols) -> np.ndarray:
    key = np.zeros(cols[0].shape, dtype=np.int64)
    for c in cols:
        key = key * 2_000_003 + c.astype(np.int64)
    return key


def _lookup(keys_sorted, order, values, query):
    pos = np.searchsorted(keys_sorted, query)
    if np.any(pos >= keys_sorted.size) or np.any(keys_sorted[pos] != query):
        raise DomainError("dataset is missing single-source partners for recovery")
    return values[order[pos]]


def phase_diff_records(ds: PhaselessDataset) -> PhaseDiffTable:
    """Pair every superposed acoustic sample with its single-source partners.

    For |w(x; y, y0)| the partners are |w(x, y)| and |w(x, y0)|; the recovered
    real cross term and clamped cosine follow the superposition algebra.
    """
    if ds.mode != "acoustic":
        raise DomainError("phase_diff_records expects an acoustic dataset")
    a = ds.arrays
    singles = a["kind"] == 0
    key_s = _pack_keys(a["x_sphere"][singles], a["x_idx"][singles],
                       a["y_sphere"][singles], a["y_idx"][singles])
    order = np.argsort(key_s)
    key_sorted = key_s[order]
    mod_s = a["modulus"][singles]

    sup = a["kind"] == 1
    xs, xi = a["x_sphere"][sup], a["x_idx"][sup]
    ys, yi = a["y_sphere"][sup], a["y_idx"][sup]
    m_sup = a["modulus"][sup]
    y0 = int(ds.meta["y0_index"])
    m1 = _lookup(key_sorted, order, mod_s, _pack_keys(xs, xi, ys, yi))
    m2 = _lookup(
        key_sorted, order, mod_s,
        _pack_keys(xs, xi, np.ones_like(ys), np.full_like(yi, y0)),
    )
    rc = recover_real_cross(m_sup, m1, m2)
    tol_amp = TOL_AMP_FACTOR * ds.max_modulus()
    defined = (m1 > tol_amp) & (m2 > tol_amp)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(defined, rc / np.where(defined, m1 * m2, 1.0), np.nan)
    bad = defined & (np.abs(c) > 1.0 + COS_ERROR_TOL)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InconsistentDataError(
            f"|cos| exceeds 1 beyond tolerance at sample {i} (value {c[i]:.6f})"
        )
    c = np.clip(c, -1.0, 1.0)
    return PhaseDiffTable(
        x_ref=np.stack([xs, xi], axis=1),
        y_ref=np.stack([ys, yi], axis=1),
        r_xy=m1,
        r_xy0=m2,
        real_cross=rc,
        cos_delta=c,
        defined=defined,
        tol_amp=tol_amp,
    )


def em_phase_diff_records(ds: PhaselessDataset, set_id: int = 1) -> PhaseDiffTable:
    """EM recovery: pair tau = (1,1) samples with their single activations.

    Set 1 channels are (m, phi) at y1 against (m, theta) at y2 on the inner
    sphere; set 2 uses the inner-sphere (m, n) singles from set 1 and the
    cross-sphere (m, l) singles of set 2.
    """
    if ds.mode != "em":
        raise DomainError("em_phase_diff_records expects an EM dataset")
    a = ds.arrays
    if set_id == 1:
        in_set = a["set_id"] == 1
        first = in_set & (a["tau1"] == 1) & (a["tau2"] == 0)
        key1 = _pack_keys(a["m"][first], a["x_idx"][first], a["y1_idx"][first])
        val1 = a["modulus"][first]
        second = in_set & (a["tau1"] == 0) & (a["tau2"] == 1)
        key2 = _pack_keys(a["m"][second], a["x_idx"][second], a["y2_idx"][second])
        val2 = a["modulus"][second]
        sup = in_set & (a["tau1"] == 1) & (a["tau2"] == 1)
        q1 = _pack_keys(a["m"][sup], a["x_idx"][sup], a["y1_idx"][sup])
        q2 = _pack_keys(a["m"][sup], a["x_idx"][sup], a["y2_idx"][sup])
        chan = np.stack(
            [a["m"][sup], np.zeros(np.sum(sup), np.uint8), np.ones(np.sum(sup), np.uint8)],
            axis=1,
        )
        y_ref = np.stack([np.ones(np.sum(sup), np.uint8), a["y2_idx"][sup]], axis=1)
    else:
        set1 = ds.arrays["set_id"] == 1
        first = set1 & (a["tau1"] == 1) & (a["tau2"] == 0)  # channel (m, phi)
        k_a = _pack_keys(a["m"][first], np.zeros(np.sum(first), np.uint8),
                         a["x_idx"][first], a["y1_idx"][first])
        second1 = set1 & (a["tau1"] == 0) & (a["tau2"] == 1)  # channel (m, theta)
        k_b = _pack_keys(a["m"][second1], np.ones(np.sum(second1), np.uint8),
                         a["x_idx"][second1], a["y2_idx"][second1])
        key1 = np.concatenate([k_a, k_b])
        val1 = np.concatenate([a["modulus"][first], a["modulus"][second1]])
        in_set = a["set_id"] == 2
        second = in_set & (a["tau1"] == 0) & (a["tau2"] == 1)
        key2 = _pack_keys(a["m"][second], a["l"][second], a["x_idx"][second],
                          a["y2_idx"][second])
        val2 = a["modulus"][second]
        sup = in_set & (a["tau1"] == 1) & (a["tau2"] == 1)
        q1 = _pack_keys(a["m"][sup], a["n"][sup], a["x_idx"][sup], a["y1_idx"][sup])
        q2 = _pack_keys(a["m"][sup], a["l"][sup], a["x_idx"][sup], a["y2_idx"][sup])
        chan = np.stack([a["m"][sup], a["n"][sup], a["l"][sup]], axis=1)
        y_ref = np.stack([np.full(np.sum(sup), 2, np.uint8), a["y2_idx"][sup]], axis=1)

    o1 = np.argsort(key1)
    o2 = np.argsort(key2)
    m1 = _lookup(key1[o1], o1, val1, q1)
    m2 = _lookup(key2[o2], o2, val2, q2)
    m_sup = a["modulus"][sup]
    rc = recover_real_cross(m_sup, m1, m2)
    tol_amp = TOL_AMP_FACTOR * ds.max_modulus()
    defined = (m1 > tol_amp) & (m2 > tol_amp)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(defined, rc / np.where(defined, m1 * m2, 1.0), np.nan)
    bad = defined & (np.abs(c) > 1.0 + COS_ERROR_TOL)
    if np.any(bad):
        raise InconsistentDataError("EM dataset cosine exceeds 1 beyond tolerance")
    c = np.clip(c, -1.0, 1.0)
    return PhaseDiffTable(
        x_ref=np.stack([np.ones(np.sum(sup), np.uint8), a["x_idx"][sup]], axis=1),
        y_ref=y_ref,
        r_xy=m1,
        r_xy0=m2,
        real_cross=rc,
        cos_delta=c,
        defined=defined,
        tol_amp=tol_amp,
        channel=chan,
    )


# --------------------------------------------------------------------------
# branch dichotomy and the conjugate discriminator


@dataclass(frozen=True)
class BranchVerdict:
    label: str  # identity | conjugate | neither
    err_identity: float
    err_conjugate: float
    usable: int


def classify_branch(
    candidate: np.ndarray,
    reference: np.ndarray,
    tol_match: float = 1e-8,
    tol_amp: float | None = None,
) -> BranchVerdict:
    """Decide between the identity and conjugate branches at field level.

    Both inputs are complex field samples at identical (x, y) pairs.  The
    verdict compares the max relative mismatch of candidate against reference
    and against conj(reference).
    """
    candidate = np.asarray(candidate, dtype=complex).ravel()
    reference = np.asarray(reference, dtype=complex).ravel()
    if candidate.shape != reference.shape:
        raise DomainError("branch classification needs aligned sample sets")
    if tol_amp is None:
        tol_amp = TOL_AMP_FACTOR * float(np.max(np.abs(reference)))
    usable = (np.abs(candidate) > tol_amp) & (np.abs(reference) > tol_amp)
    n_usable = int(np.count_nonzero(usable))
    if n_usable < 8:
        raise InsufficientDataError(
            f"only {n_usable} usable pairs (need at least 8)"
        )
    c, r = candidate[usable], reference[usable]
    scale = float(np.max(np.abs(r)))
    err_id = float(np.max(np.abs(c - r)) / scale)
    err_conj = float(np.max(np.abs(c - np.conj(r))) / scale)
    if err_id < tol_match:
        label = "identity"
    elif err_conj < tol_match:
        label = "conjugate"
    else:
        label = "neither"
    return BranchVerdict(label, err_id, err_conj, n_usable)


class ConjugatedField:
    """Total-field evaluator returning the complex conjugate of another field.

    Used to inject the spurious branch w -> conj(w) into the discriminator.
    """

    def __init__(self, inner):
        self.inner = inner
        self.k = inner.k
        self.source = inner.source

    def total(self, x):
        return np.conj(self.inner.total(x))

    def total_dr(self, x):
        return np.conj(self.inner.total_dr(x))


@dataclass(frozen=True)
class DiscriminatorVerdict:
    verdict: str  # consistent_radiating | conjugate_branch_rejected
    margin: float
    note: str
    trace_max: float
    interior_max: float


_PROBE_DIRS = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.57735026918962576, 0.57735026918962576, 0.57735026918962576],
        [-0.57735026918962576, 0.57735026918962576, -0.57735026918962576],
    ]
)


def _project_sphere_traces(vals, grid: SphereGrid, n_max: int):
    """Coefficients <v, Y_n^m> over the unit-sphere measure of a GL grid."""
    if grid.weights is None:
        raise DomainError("modal projection needs a gauss_legendre grid")
    w = grid.weights / grid.radius**2
    ct = np.cos(grid.theta)
    st = np.sin(grid.theta)
    pbar, _ = norm_legendre_table(n_max, ct, st)
    out = np.zeros((n_max + 1, 2 * n_max + 1), dtype=complex)
    for n in range(n_max + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            y = pbar[n, am] * np.exp(1j * am * grid.phi)
            if m < 0:
                y = (-1.0 if am % 2 else 1.0) * np.conj(y)
            out[n, m + n_max] = np.sum(w * vals * np.conj(y))
    return out


def conjugate_discriminator(
    cfg: AcousticConfig,
    field1,
    field2,
    grid1: SphereGrid,
    grid2: SphereGrid,
    trace_tol: float = 1e-6,
    growth_reject: float = 10.0,
    probe_factors: tuple[float, float] = (10.0, 1000.0),
    eigen_margin_min: float = 1e-6,
) -> DiscriminatorVerdict:
    """Eliminate the conjugate branch through the shell Dirichlet argument.

    v := w1 - conj(w2) is sampled on both measurement spheres.  If the traces
    do not vanish the conjugate hypothesis is vacuous and the pair is
    consistent.  If they vanish, the shell Dirichlet problem (solvable per
    the eigenvalue certificate) forces v = 0 across the shell, so each
    candidate's implied scattered part w_j - Phi(. , y0) must satisfy the
    radiation condition; a conjugated field cannot, and its residual fails to
    decay like 1/r.  The margin is the worst growth factor of the residual
    against the 1/r envelope between the two probe radii.
    """
    cert = certify_eigenvalue_free(ShellSpec(cfg.R1, cfg.R2, cfg.k), "dirichlet")
    if cert.margin < eigen_margin_min:
        raise IllPosedConfigError(
            f"k={cfg.k} sits within {cert.margin:.2e} of a shell Dirichlet "
            f"eigenvalue (worst order {cert.worst_n})"
        )
    y0 = np.asarray(field1.source, dtype=float)
    if np.linalg.norm(np.asarray(field2.source, float) - y0) > 1e-12:
        raise DomainError("both fields must share the reference source y0")
    for g in (grid1, grid2):
        if np.min(np.linalg.norm(g.cart - y0, axis=-1)) < 1e-9:
            raise DomainError("discriminator grids must not contain y0 itself")

    v1 = field1.total(grid1.cart) - np.conj(field2.total(grid1.cart))
    v2 = field1.total(grid2.cart) - np.conj(field2.total(grid2.cart))
    scale = max(
        float(np.max(np.abs(field1.total(grid1.cart)))),
        float(np.max(np.abs(field1.total(grid2.cart)))),
    )
    trace_max = max(float(np.max(np.abs(v1))), float(np.max(np.abs(v2)))) / scale
    if trace_max > trace_tol:
        return DiscriminatorVerdict(
            verdict="consistent_radiating",
            margin=0.0,
            note="hypothesis vacuous: boundary traces of w1 - conj(w2) do not vanish",
            trace_max=trace_max,
            interior_max=0.0,
        )

    # Traces vanish: extend v through the shell by the modal Dirichlet solve.
    n_theta = int(np.unique(grid1.theta).size)
    n_phi = len(grid1) // n_theta
    n_solve = min(cert.n_max, n_theta - 1, (n_phi - 2) // 2)
    g1_hat = _project_sphere_traces(v1, grid1, n_solve)
    g2_hat = _project_sphere_traces(v2, grid2, n_solve)
    r_mid = 0.5 * (cfg.R1 + cfg.R2)
    j_mid, y_mid, _, _ = _sph_jy_table(n_solve, np.asarray([cfg.k * r_mid]))
    interior = 0.0
    for n in range(n_solve + 1):
        mat = shell_radial_matrix(n, cfg.k, cfg.R1, cfg.R2)
        for m in range(-n, n + 1):
            rhs = np.array([g1_hat[n, m + n_solve], g2_hat[n, m + n_solve]])
            alpha, beta = np.linalg.solve(mat, rhs)
            interior = max(
                interior, abs(alpha * j_mid[n, 0] + beta * y_mid[n, 0])
            )
    interior /= scale

    # Radiation test of both implied scattered parts w_j - Phi(., y0).
    r_lo = probe_factors[0] * cfg.R2
    r_hi = probe_factors[1] * cfg.R2
    margin = 0.0
    for f in (field1, field2):
        res = []
        for r in (r_lo, r_hi):
            pts = r * _PROBE_DIRS
            val = f.total(pts) - fundamental_solution(cfg.k, pts, y0)
            der = f.total_dr(pts) - _fundamental_dr(cfg.k, pts, y0)
            res.append(float(np.max(np.abs(r * (der - 1j * cfg.k * val)))))
        growth = (res[1] / res[0]) * (r_hi / r_lo) if res[0] > 0 else 1.0
        margin = max(margin, growth)
    if margin >= growth_reject:
        return DiscriminatorVerdict(
            verdict="conjugate_branch_rejected",
            margin=margin,
            note="implied conjugate field violates the radiation decay envelope",
            trace_max=trace_max,
            interior_max=interior,
        )
    return DiscriminatorVerdict(
        verdict="consistent_radiating",
        margin=margin,
        note="boundary traces vanish and both implied fields radiate",
        trace_max=trace_max,
        interior_max=interior,
    )
