"""Command-line front end: dataset synthesis, verification suites, eigenvalue
certification, singularity/radiation probes, and branch discrimination.

Configuration lives in a single TOML file (see configs/ for templates).
Exit codes: 0 success, 1 check failure, 2 usage or parse error, 3 ill-posed
configuration (wavenumber at or too near a shell eigenvalue).
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .acoustic import (
    AcousticConfig,
    ball_medium,
    impedance_sphere,
    radiation_residual,
    solve_medium_ls,
    solve_sphere_point_source,
    sound_soft_sphere,
)
from .eigencheck import ShellSpec, certify_eigenvalue_free, find_eigen_k
from .em import singularity_probe
from .errors import DomainError, IllPosedConfigError
from .geometry import SpherePoint, sphere_grid
from .phaseless import (
    ConjugatedField,
    PhaselessDataset,
    conjugate_discriminator,
    synthesize_acoustic,
    synthesize_em,
)
from .verify import (
    check_acoustic_reciprocity,
    check_em_mixed_reciprocity,
    check_em_reciprocity,
    check_mixed_reciprocity_acoustic,
    check_nonvanishing,
    reports_to_json,
    run_suite,
    uniqueness_premise_witness,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_ILL_POSED = 3


@dataclass
class RunConfig:
    """Validated run configuration assembled from the TOML file."""

    mode: str
    k: float
    R1: float
    R2: float
    seed: int
    scatterer: object
    grid1_shape: tuple[int, int]
    grid2_shape: tuple[int, int]
    scheme: str
    y0_index: int
    y0_theta: float
    y0_phi: float
    out_dir: Path
    tolerances: dict = field(default_factory=dict)

    @property
    def acoustic(self) -> AcousticConfig:
        return AcousticConfig(k=self.k, R1=self.R1, R2=self.R2)

    def grids(self):
        g1 = sphere_grid(self.R1, *self.grid1_shape, scheme=self.scheme)
        g2 = sphere_grid(self.R2, *self.grid2_shape, scheme=self.scheme)
        return g1, g2


def _build_scatterer(mode: str, sc: dict):
    kind = sc.get("kind")
    if mode == "acoustic":
        if kind == "sound_soft_sphere":
            return sound_soft_sphere(float(sc["radius"]))
        if kind == "impedance_sphere":
            eta = complex(float(sc.get("eta_re", 0.0)), float(sc.get("eta_im", 0.0)))
            return impedance_sphere(float(sc["radius"]), eta)
        if kind == "medium":
            contrast = complex(
                float(sc.get("contrast_re", 0.0)), float(sc.get("contrast_im", 0.0))
            )
            return ball_medium(
                [float(v) for v in sc.get("center", [0.0, 0.0, 0.0])],
                float(sc["ball_radius"]),
                contrast,
                int(sc.get("n_voxels", 12)),
            )
        raise DomainError(f"unknown acoustic scatterer kind {kind!r}")
    if kind == "pec_sphere":
        return float(sc["radius"])
    raise DomainError(f"unknown em scatterer kind {kind!r}")


def _load(args) -> RunConfig:
    cfg = load_config(args.config, args.tol_override)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def load_config(path, overrides=()) -> RunConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    run = raw["run"]
    mode = run["mode"]
    if mode not in ("acoustic", "em"):
        raise DomainError(f"mode must be 'acoustic' or 'em', got {mode!r}")
    grids = raw.get("grids", {})
    phl = raw.get("phaseless", {})
    tol = dict(raw.get("tolerances", {}))
    for kv in overrides:
        if "=" not in kv:
            raise DomainError(f"--tol-override expects KEY=VAL, got {kv!r}")
        key, val = kv.split("=", 1)
        tol[key.strip()] = float(val)
    cfg = RunConfig(
        mode=mode,
        k=float(run["k"]),
        R1=float(run["R1"]),
        R2=float(run["R2"]),
        seed=int(run.get("seed", 0)),
        scatterer=_build_scatterer(mode, raw.get("scatterer", {})),
        grid1_shape=(int(grids.get("r1_n_theta", 6)), int(grids.get("r1_n_phi", 12))),
        grid2_shape=(int(grids.get("r2_n_theta", 6)), int(grids.get("r2_n_phi", 12))),
        scheme=grids.get("scheme", "gauss_legendre"),
        y0_index=int(phl.get("y0_index", 0)),
        y0_theta=float(phl.get("y0_theta", 1.0)),
        y0_phi=float(phl.get("y0_phi", 0.37)),
        out_dir=Path(raw.get("output", {}).get("dir", ".")),
        tolerances=tol,
    )
    cfg.acoustic  # validate radii/wavenumber
    return cfg


def _certificate_gate(cfg: RunConfig):
    kind = "dirichlet" if cfg.mode == "acoustic" else "maxwell"
    cert = certify_eigenvalue_free(
        ShellSpec(cfg.R1, cfg.R2, cfg.k),
        kind,
        tol_cert=cfg.tolerances.get("tol_cert", 1e-6),
    )
    if not cert.free:
        raise IllPosedConfigError(
            f"k={cfg.k} is a shell {kind} eigenvalue to margin {cert.margin:.2e} "
            f"(worst order {cert.worst_n}); choose different radii or wavenumber"
        )
    return cert


def cmd_synth(args) -> int:
    cfg = _load(args)
    cert = _certificate_gate(cfg)
    g1, g2 = cfg.grids()
    if cfg.mode == "acoustic":
        ds = synthesize_acoustic(
            cfg.acoustic, cfg.scatterer, g1, g2, cfg.y0_index, jobs=args.jobs
        )
    else:
        ds = synthesize_em(cfg.acoustic, cfg.scatterer, g1, g2, jobs=args.jobs)
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    jsonl = out / "dataset.jsonl"
    ds.to_jsonl(jsonl)
    ds.to_csv(out / "dataset.csv")
    print(f"eigenvalue certificate: free (margin {cert.margin:.3e})")
    print(f"samples: {len(ds)}")
    print(f"modulus range: [{np.min(ds.modulus):.6e}, {np.max(ds.modulus):.6e}]")
    print(f"wrote {jsonl} and {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    g1, g2 = cfg.grids()
    acfg = cfg.acoustic
    tol = cfg.tolerances
    tasks = []
    if cfg.mode == "acoustic":
        sc = cfg.scatterer
        tasks.append(
            lambda: check_acoustic_reciprocity(
                acfg, sc, 20, seed=cfg.seed,
                tolerance=tol.get("acoustic_reciprocity"),
            )
        )
        if not hasattr(sc, "n"):  # sphere obstacles support plane-wave solves
            tasks.append(
                lambda: check_mixed_reciprocity_acoustic(
                    acfg, sc, 6, 6, seed=cfg.seed,
                    tolerance=tol.get("mixed_reciprocity", 1e-7),
                )
            )
            tasks.append(
                lambda: uniqueness_premise_witness(
                    acfg, sc, sound_soft_sphere(sc.radius * 1.1), g1, g2, cfg.y0_index,
                    floor=tol.get("distinctness_floor", 1e-4),
                )
            )
        if args.dataset:
            try:
                ds = PhaselessDataset.from_jsonl(args.dataset)
            except (ValueError, OSError, KeyError) as exc:
                print(f"error: cannot read dataset: {exc}", file=sys.stderr)
                return EXIT_USAGE
        else:
            ds = synthesize_acoustic(acfg, sc, g1, g2, cfg.y0_index)
        tasks.append(lambda: check_nonvanishing(ds))
    else:
        a = cfg.scatterer
        tasks.append(
            lambda: check_em_reciprocity(
                acfg, a, 12, seed=cfg.seed, tolerance=tol.get("em_reciprocity", 1e-8)
            )
        )
        tasks.append(
            lambda: check_em_mixed_reciprocity(
                acfg, a, 3, 3, seed=cfg.seed,
                tolerance=tol.get("em_mixed_reciprocity", 1e-7),
            )
        )
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(lambda t: t(), tasks))
    else:
        reports = [t() for t in tasks]
    ok, table = run_suite(reports)
    print(table)
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(reports_to_json(reports))
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_eigencheck(args) -> int:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    ks = np.linspace(args.k_min, args.k_max, args.steps) if args.steps > 0 else []
    for k in ks:
        cert = certify_eigenvalue_free(ShellSpec(args.R1, args.R2, float(k)), args.kind)
        rows.append((float(k), cert.margin, cert.worst_n))
    with open(out / "eigencheck.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "margin", "worst_n"])
        for k, m, n in rows:
            w.writerow([repr(k), repr(m), n])
    families = (
        ["dirichlet"] if args.kind == "dirichlet" else ["maxwell_M", "maxwell_N"]
    )
    roots = []
    if args.steps > 0 and args.k_max > args.k_min:
        n_top = int(np.ceil(args.k_max * args.R2)) + 10
        for fam in families:
            n_lo = 0 if fam == "dirichlet" else 1
            for n in range(n_lo, n_top + 1):
                for r in find_eigen_k(n, args.R1, args.R2, fam, (args.k_min, args.k_max)):
                    roots.append((fam, n, r))
    with open(out / "eigencheck_roots.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "n", "k_root"])
        for fam, n, r in sorted(roots, key=lambda t: (t[2], t[0], t[1])):
            w.writerow([fam, n, repr(r)])
    print(f"scanned {len(rows)} wavenumbers, found {len(roots)} roots")
    print(f"wrote {out / 'eigencheck.csv'} and {out / 'eigencheck_roots.csv'}")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _load(args)
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"probe_{args.kind}.csv"
    if args.kind in ("phi_phi", "phi_theta"):
        y = SpherePoint(cfg.R1, cfg.y0_theta, cfg.y0_phi)
        if y.is_pole:
            print("error: probe source sits at a pole", file=sys.stderr)
            return EXIT_USAGE
        angles = np.geomspace(args.angle_max, args.angle_min, args.n_samples)
        probe = singularity_probe(args.kind, cfg.k, y, angles)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["angle", "r", "measured_re", "measured_im", "predicted_re",
                 "predicted_im", "ratio_re", "ratio_im", "abs_scaled_r3"]
            )
            for i in range(probe.angle.size):
                w.writerow(
                    [repr(float(probe.angle[i])), repr(float(probe.r[i])),
                     repr(float(probe.measured[i].real)), repr(float(probe.measured[i].imag)),
                     repr(float(probe.predicted[i].real)), repr(float(probe.predicted[i].imag)),
                     repr(float(probe.ratio[i].real)), repr(float(probe.ratio[i].imag)),
                     repr(float(abs(probe.measured[i]) * 4 * np.pi * probe.r[i] ** 3))]
                )
        print(f"fitted |measured| slope: {probe.fitted_slope():+.4f} (expect -3)")
    else:  # radiation
        if cfg.mode != "acoustic":
            print("error: radiation probe needs an acoustic config", file=sys.stderr)
            return EXIT_USAGE
        y0 = SpherePoint(cfg.R1, cfg.y0_theta, cfg.y0_phi).cart
        if hasattr(cfg.scatterer, "n"):
            f = solve_medium_ls(cfg.acoustic, cfg.scatterer, y0)
        else:
            f = solve_sphere_point_source(cfg.acoustic, cfg.scatterer, y0)
        xhat = np.array([0.0, 0.6, 0.8])
        radii = np.geomspace(10 * cfg.R2, 1000 * cfg.R2, args.n_samples)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "residual", "r_times_residual"])
            for r in radii:
                res = radiation_residual(f, float(r), xhat)
                w.writerow([repr(float(r)), repr(res), repr(float(r) * res)])
        vals = np.array(
            [radiation_residual(f, float(r), xhat) for r in radii]
        )
        slope = np.polyfit(np.log(radii), np.log(vals), 1)[0]
        print(f"fitted residual slope: {slope:+.4f} (expect -1)")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_discriminate(args) -> int:
    cfg = _load(args)
    if cfg.mode != "acoustic":
        print("error: discriminate needs an acoustic config", file=sys.stderr)
        return EXIT_USAGE
    acfg = cfg.acoustic
    y0 = SpherePoint(cfg.R1, cfg.y0_theta, cfg.y0_phi).cart
    if hasattr(cfg.scatterer, "n"):
        f = solve_medium_ls(acfg, cfg.scatterer, y0)
    else:
        f = solve_sphere_point_source(acfg, cfg.scatterer, y0)
    g1, g2 = cfg.grids()
    candidate = ConjugatedField(f) if args.inject_conjugate else f
    verdict = conjugate_discriminator(
        acfg, f, candidate, g1, g2,
        trace_tol=cfg.tolerances.get("trace_tol", 1e-6),
        growth_reject=cfg.tolerances.get("growth_reject", 10.0),
    )
    print(f"verdict: {verdict.verdict}")
    print(f"margin:  {verdict.margin:.4f}")
    print(f"note:    {verdict.note}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nearphase",
        description="Two-sphere phaseless scattering: synthesis, checks, probes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--jobs", type=int, default=1, help="parallel checks")
        p.add_argument(
            "--tol-override", action="append", default=[], metavar="KEY=VAL",
            help="override a named tolerance",
        )

    p = sub.add_parser("synth", help="synthesize a phaseless dataset")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="run the identity check suite")
    common(p)
    p.add_argument("--dataset", default=None, help="check an existing JSONL dataset")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eigencheck", help="scan shell eigenvalue margins and roots")
    common(p, config_required=False)
    p.add_argument("--k-min", type=float, required=True)
    p.add_argument("--k-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--R1", type=float, required=True)
    p.add_argument("--R2", type=float, required=True)
    p.add_argument("--kind", choices=("dirichlet", "maxwell"), default="dirichlet")
    p.set_defaults(func=cmd_eigencheck)

    p = sub.add_parser(
        "probe",
        help="singularity and radiation probe tables",
        description="Emit plot-ready CSV probe tables.",
        epilog=(
            "phi_phi / phi_theta columns: angle, r, measured_re, measured_im, "
            "predicted_re, predicted_im, ratio_re, ratio_im, abs_scaled_r3 "
            "(|measured| 4 pi r^3). radiation columns: r, residual, "
            "r_times_residual."
        ),
    )
    common(p)
    p.add_argument(
        "--kind", choices=("phi_phi", "phi_theta", "radiation"), required=True
    )
    p.add_argument("--angle-max", type=float, default=1e-2)
    p.add_argument("--angle-min", type=float, default=1e-4)
    p.add_argument("--n-samples", type=int, default=12)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("discriminate", help="run the conjugate-branch discriminator")
    common(p)
    p.add_argument(
        "--inject-conjugate", action="store_true",
        help="test the artificially conjugated branch (expected rejection)",
    )
    p.set_defaults(func=cmd_discriminate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for usage errors
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except IllPosedConfigError as exc:
        print(f"ill-posed configuration: {exc}", file=sys.stderr)
        return EXIT_ILL_POSED
    except (DomainError, KeyError, ValueError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
