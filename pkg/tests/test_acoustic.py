import numpy as np
import pytest

from nearphase.acoustic import (
    AcousticConfig,
    ball_medium,
    far_field,
    fundamental_solution,
    impedance_sphere,
    radiation_residual,
    solve_medium_ls,
    solve_sphere_plane_wave,
    solve_sphere_point_source,
    sound_soft_sphere,
    total_field_superposed,
)
from nearphase.errors import DomainError, SingularityError
from nearphase.geometry import sphere_grid

CFG = AcousticConfig(k=1.0, R1=1.0, R2=2.0)
SOFT = sound_soft_sphere(0.5)


def test_fundamental_solution_closed_form():
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([0.0, 0.0, 0.0])
    val = fundamental_solution(1.0, x, y)
    assert val == pytest.approx(np.exp(1j) / (4 * np.pi), rel=1e-14)
    # |Phi| = 1/(4 pi |x-y|) regardless of k
    far = np.array([120.0, -3.0, 7.0])
    assert abs(fundamental_solution(5.7, far, y)) == pytest.approx(
        1 / (4 * np.pi * np.linalg.norm(far)), rel=1e-14
    )


def test_fundamental_solution_symmetry_and_singularity():
    x = np.array([0.3, 0.4, -0.2])
    y = np.array([-1.0, 0.2, 0.5])
    assert fundamental_solution(2.0, x, y) == fundamental_solution(2.0, y, x)
    with pytest.raises(SingularityError):
        fundamental_solution(1.0, x, x)


def test_fundamental_solution_helmholtz_residual():
    # central second differences of Phi satisfy the Helmholtz equation away from y
    k, y = 1.3, np.zeros(3)
    x0 = np.array([0.9, 0.4, 0.3])
    for h in (1e-2, 5e-3):
        lap = 0.0
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = h
            lap += (
                fundamental_solution(k, x0 + e, y)
                - 2 * fundamental_solution(k, x0, y)
                + fundamental_solution(k, x0 - e, y)
            ) / h**2
        res = abs(lap + k**2 * fundamental_solution(k, x0, y))
        assert res < 5.0 * h**2  # O(h^2) envelope


def _surface_points(radius, n=200, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return radius * v


def test_sound_soft_boundary_residual():
    y = np.array([2.0, 0.0, 0.0])
    f = solve_sphere_point_source(CFG, SOFT, y)
    pts = _surface_points(SOFT.radius)
    assert np.max(np.abs(f.total(pts))) < 1e-8
    assert f.trunc_certificate < 1e-12


def test_neumann_boundary_residual():
    hard = impedance_sphere(0.5, 0.0)
    y = np.array([0.0, 1.5, 0.8])
    f = solve_sphere_point_source(CFG, hard, y)
    pts = _surface_points(0.5)
    assert np.max(np.abs(f.total_dr(pts))) < 1e-8


def test_impedance_boundary_residual():
    sc = impedance_sphere(0.5, 1.0 + 0.5j)
    y = np.array([1.2, -0.3, 0.4])
    f = solve_sphere_point_source(CFG, sc, y)
    pts = _surface_points(0.5)
    res = f.total_dr(pts) + sc.eta * f.total(pts)
    assert np.max(np.abs(res)) < 1e-8


def test_plane_wave_boundary_residual():
    d = np.array([0.0, 0.6, 0.8])
    f = solve_sphere_plane_wave(CFG, SOFT, d)
    pts = _surface_points(SOFT.radius)
    assert np.max(np.abs(f.total(pts))) < 1e-8


def test_point_source_reciprocity():
    rng = np.random.default_rng(7)
    k = 1.0
    for _ in range(20):
        x = _sample_exterior(rng)
        y = _sample_exterior(rng)
        fy = solve_sphere_point_source(CFG, SOFT, y)
        fx = solve_sphere_point_source(CFG, SOFT, x)
        a, b = fy.scattered(x), fx.scattered(y)
        assert abs(a - b) <= 1e-10 * max(abs(a), 1e-30)


def _sample_exterior(rng, r_lo=1.0, r_hi=2.0):
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return rng.uniform(r_lo, r_hi) * v


def test_plane_wave_rotational_covariance():
    rng = np.random.default_rng(5)
    d = np.array([1.0, 0.0, 0.0])
    x = np.array([0.0, 1.3, 0.6])
    # rotation about z then x
    a, b = 0.7, 1.1
    rz = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    rx = np.array([[1, 0, 0], [0, np.cos(b), -np.sin(b)], [0, np.sin(b), np.cos(b)]])
    rot = rx @ rz
    f1 = solve_sphere_plane_wave(CFG, SOFT, d)
    f2 = solve_sphere_plane_wave(CFG, SOFT, rot @ d)
    v1 = f1.scattered(x)
    v2 = f2.scattered(rot @ x)
    assert abs(v1 - v2) < 1e-10 * abs(v1)


def test_far_field_extrapolation_oracle():
    y = np.array([0.0, 0.0, 1.8])
    f = solve_sphere_point_source(CFG, SOFT, y)
    xhat = np.array([0.36, 0.48, 0.8])
    xhat /= np.linalg.norm(xhat)
    closed = f.far(xhat)
    # Richardson extrapolation of r e^{-ikr} w_s(r xhat) in powers of 1/r
    rs = np.array([1e2, 1e3, 1e4]) * CFG.R1
    vals = np.array(
        [r * np.exp(-1j * CFG.k * r) * f.scattered(r * xhat) for r in rs]
    )
    # two-level elimination of the 1/r term
    e1 = (rs[1] * vals[1] - rs[0] * vals[0]) / (rs[1] - rs[0])
    e2 = (rs[2] * vals[2] - rs[1] * vals[1]) / (rs[2] - rs[1])
    extrap = e2  # residual now O(1/r^2)
    assert abs(extrap - closed) < 1e-8
    assert abs(e2 - e1) < 1e-6


def test_superposition_identities():
    y1 = np.array([1.5, 0.0, 0.0])
    y2 = np.array([0.0, 1.5, 0.0])
    f1 = solve_sphere_point_source(CFG, SOFT, y1)
    f2 = solve_sphere_point_source(CFG, SOFT, y2)
    x = np.array([0.0, 0.0, 1.9])
    w = total_field_superposed(f1, f2, x)
    assert w == pytest.approx(f1.total(x) + f2.total(x), rel=1e-14)
    # zero activation drops the second source
    f2_off = solve_sphere_point_source(CFG, SOFT, y2)
    f2_off.tau = 0
    assert total_field_superposed(f1, f2_off, x) == pytest.approx(f1.total(x), rel=1e-14)
    # same source twice doubles
    f1b = solve_sphere_point_source(CFG, SOFT, y1)
    assert total_field_superposed(f1, f1b, x) == pytest.approx(2 * f1.total(x), rel=1e-14)
    # modulus expansion identity
    w1, w2 = f1.total(x), f2.total(x)
    lhs = abs(w1 + w2) ** 2 - abs(w1) ** 2 - abs(w2) ** 2
    assert lhs == pytest.approx(2 * np.real(w1 * np.conj(w2)), abs=1e-14)


def test_superposition_rejects_mismatched_configs():
    f1 = solve_sphere_point_source(CFG, SOFT, np.array([1.5, 0, 0]))
    f2 = solve_sphere_point_source(CFG, sound_soft_sphere(0.4), np.array([0, 1.5, 0]))
    with pytest.raises(DomainError):
        total_field_superposed(f1, f2, np.array([0, 0, 1.9]))


def test_radiation_residual_decay():
    y = np.array([1.4, 0.3, 0.0])
    f = solve_sphere_point_source(CFG, SOFT, y)
    xhat = np.array([0.0, 0.0, 1.0])
    r10 = radiation_residual(f, 10 * CFG.R1, xhat)
    r100 = radiation_residual(f, 100 * CFG.R1, xhat)
    assert r100 > 0
    assert r10 / r100 == pytest.approx(10.0, rel=0.5)


def test_radiation_residual_point_source_at_origin():
    med = ball_medium([0.05, 0.0, 0.0], 0.25, 0.0, 8)  # no contrast
    f = solve_medium_ls(CFG, med, np.array([0.0, 0.0, 0.0]))
    xhat = np.array([1.0, 0.0, 0.0])
    vals = [radiation_residual(f, r, xhat, part="incident") for r in (5.0, 50.0, 500.0)]
    assert vals[2] < vals[1] < vals[0]
    assert vals[2] < 1e-3


def test_solver_rejects_bad_geometry():
    with pytest.raises(DomainError):
        solve_sphere_point_source(CFG, SOFT, np.array([0.3, 0.0, 0.0]))
    with pytest.raises(DomainError):
        solve_sphere_point_source(CFG, sound_soft_sphere(1.5), np.array([2.5, 0, 0]))
    with pytest.raises(DomainError):
        AcousticConfig(k=1.0, R1=2.0, R2=1.0)


# ---------------------------------------------------------------- medium

def test_medium_no_contrast_scatters_nothing():
    med = ball_medium([0.0, 0.0, 0.1], 0.3, 0.0, 8)
    f = solve_medium_ls(CFG, med, np.array([1.5, 0.0, 0.0]))
    pts = _surface_points(2.0, 20)
    assert np.max(np.abs(f.scattered(pts))) == 0.0
    assert np.max(np.abs(f.far(pts / 2.0))) == 0.0


def _born_oracle(med, k, y, pts):
    """Single-scattering quadrature, written independently of the solver path:
    direct summation of Phi(x, z) (n(z) - 1) Phi(z, y) over support voxels."""
    m = med.contrast
    mask = m != 0
    z = med.centers[mask]
    wi_z = np.exp(1j * k * np.linalg.norm(z - y, axis=-1)) / (
        4 * np.pi * np.linalg.norm(z - y, axis=-1)
    )
    out = []
    for p in pts:
        s = np.linalg.norm(p - z, axis=-1)
        phi = np.exp(1j * k * s) / (4 * np.pi * s)
        out.append(k**2 * np.sum(phi * m[mask] * wi_z) * med.h**3)
    return np.array(out)


def test_medium_matches_born_oracle_at_small_contrast():
    # ball small enough that the double-scattering term k^2 |m| int|Phi|
    # sits below the 1e-6 comparison tolerance
    med = ball_medium([0.0, 0.0, 0.0], 0.12, 1e-4, 12)
    y = np.array([1.2, 0.1, -0.2])
    f = solve_medium_ls(CFG, med, y)
    pts = _surface_points(1.8, 12, seed=3)
    got = f.scattered(pts)
    want = _born_oracle(med, CFG.k, y, pts)
    rel = np.max(np.abs(got - want) / np.abs(want))
    assert rel < 1e-6


def test_medium_reciprocity():
    med = ball_medium([0.05, 0.0, 0.0], 0.3, 0.2 + 0.05j, 10)
    rng = np.random.default_rng(2)
    for _ in range(6):
        x = _sample_exterior(rng, 1.0, 2.0)
        y = _sample_exterior(rng, 1.0, 2.0)
        fx = solve_medium_ls(CFG, med, x)
        fy = solve_medium_ls(CFG, med, y)
        a, b = fy.scattered(x), fx.scattered(y)
        assert abs(a - b) <= 1e-6 * max(abs(a), 1e-20)


def test_medium_pde_residual_second_order():
    # outside the support the potential satisfies Helmholtz exactly, so the
    # finite-difference residual is pure truncation and scales like h^2
    med = ball_medium([0.0, 0.0, 0.0], 0.3, 0.3, 10)
    y = np.array([1.5, 0.0, 0.0])
    f = solve_medium_ls(CFG, med, y)
    x0 = np.array([0.0, 0.75, 0.0])  # off support, away from source
    res = []
    for h in (2e-2, 1e-2):
        lap = 0.0
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = h
            lap += (f.scattered(x0 + e) - 2 * f.scattered(x0) + f.scattered(x0 - e)) / h**2
        res.append(abs(lap + CFG.k**2 * f.scattered(x0)))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.5)


def test_obstacle_pde_residual_second_order():
    y = np.array([1.5, 0.0, 0.0])
    f = solve_sphere_point_source(CFG, SOFT, y)
    x0 = np.array([0.0, 0.9, 0.3])
    res = []
    for h in (2e-2, 1e-2):
        lap = 0.0
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = h
            lap += (f.scattered(x0 + e) - 2 * f.scattered(x0) + f.scattered(x0 - e)) / h**2
        res.append(abs(lap + CFG.k**2 * f.scattered(x0)))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.5)


def test_total_field_singularity_scaling():
    # |w(x, y)| * 4 pi |x - y| tends to 1 as x approaches the source
    y = np.array([1.5, 0.0, 0.0])
    f = solve_sphere_point_source(CFG, SOFT, y)
    for eps in (1e-3, 1e-5):
        x = y + np.array([0.0, eps, 0.0])
        assert abs(f.total(x)) * 4 * np.pi * eps == pytest.approx(1.0, abs=1e-2)


def test_nonvanishing_on_outer_sphere():
    y0 = np.array([1.0, 0.0, 0.0])
    f = solve_sphere_point_source(CFG, SOFT, y0)
    g = sphere_grid(CFG.R2, 8, 16)
    assert np.max(np.abs(f.total(g.cart))) > 1e-6


def test_medium_validation():
    with pytest.raises(DomainError):
        ball_medium([0, 0, 0], 0.3, -1.5, 6)  # Re n <= 0
    med = ball_medium([0, 0, 0], 0.9, 0.1, 6)
    with pytest.raises(DomainError):
        solve_medium_ls(CFG, med, np.array([1.5, 0, 0]))  # support reaches R1
    med2 = ball_medium([0, 0, 0], 0.3, 0.1, 6)
    with pytest.raises(DomainError):
        solve_medium_ls(CFG, med2, np.array([0.1, 0, 0]))  # source inside support


def test_field_json_export():
    y = np.array([1.5, 0.0, 0.0])
    f = solve_sphere_point_source(CFG, SOFT, y)
    import json

    rec = json.loads(f.to_json())
    assert rec["kind"] == "modal_series"
    assert rec["k"] == CFG.k
    assert rec["trunc_certificate"] < 1e-12
    coeffs = np.array([complex(a, b) for a, b in rec["coefficients"]])
    assert np.array_equal(coeffs, f.coeffs)
    med = ball_medium([0.0, 0.0, 0.1], 0.2, 0.1, 6)
    fm = solve_medium_ls(CFG, med, y)
    rec_m = json.loads(fm.to_json())
    assert rec_m["kind"] == "volume_potential"
    assert rec_m["density_shape"] == [6, 6, 6]
    assert rec_m["ls_residual"] < 1e-8


def test_radiation_residual_zero_field_is_zero():
    med = ball_medium([0.0, 0.0, 0.1], 0.3, 0.0, 8)  # no contrast: w_s = 0
    f = solve_medium_ls(CFG, med, np.array([1.5, 0.0, 0.0]))
    assert radiation_residual(f, 25.0, np.array([0.0, 0.0, 1.0])) == 0.0


def test_mixed_reciprocity_trivial_for_empty_medium():
    # n = 1 everywhere: both sides of 4 pi w_far(-d, z) = u_s(z, d) vanish
    med = ball_medium([0.0, 0.0, 0.1], 0.3, 0.0, 8)
    d = np.array([0.0, 0.6, 0.8])
    z = np.array([1.5, 0.2, 0.0])
    f_ps = solve_medium_ls(CFG, med, z)
    f_pw = solve_medium_ls(CFG, med, d, source_kind="plane")
    assert abs(4 * np.pi * f_ps.far(-d)) == 0.0
    assert abs(f_pw.scattered(z)) == 0.0


def test_source_on_voxel_center_is_offset():
    med = ball_medium([0.0, 0.0, 0.0], 0.3, 0.1, 10)
    # pick a voxel center outside the support ball but inside the box corner
    centers = med.centers.reshape(-1, 3)
    outside = centers[np.linalg.norm(centers, axis=-1) > med.support_reach()]
    y = outside[-1]
    f = solve_medium_ls(CFG, med, y.copy())
    assert np.linalg.norm(f.source - y) == pytest.approx(med.h / 2, rel=1e-12)
    assert f.ls_residual < 1e-8


def test_high_contrast_uses_gmres_and_converges():
    from nearphase.acoustic import _LsOperator

    med = ball_medium([0.0, 0.0, 0.05], 0.3, 4.0, 10)
    op = _LsOperator(med, CFG.k)
    assert op.born_bound >= 0.8  # Born iteration would not contract
    f = solve_medium_ls(CFG, med, np.array([1.5, 0.0, 0.0]))
    assert f.ls_residual < 1e-8
    # reciprocity still holds on the converged solve
    x = np.array([0.0, 1.6, 0.3])
    fx = solve_medium_ls(CFG, med, x)
    a, b = f.scattered(x), fx.scattered(np.array([1.5, 0.0, 0.0]))
    assert abs(a - b) < 1e-6 * abs(a)


def _penetrable_sphere_series(k, n_ref, a, y, pts, n_max=40):
    """Exact transmission series for a homogeneous penetrable ball.

    Independent of the volume-potential path: exterior j/h and interior
    j(k1 r) radial factors matched in value and radial derivative at r = a,
    with k1 = k sqrt(n_ref).
    """
    from nearphase.specfun import _sph_jy_table, legendre

    k1 = k * np.sqrt(n_ref)
    ry = np.linalg.norm(y)
    j0, y0, jp0, yp0 = _sph_jy_table(n_max, np.array([k * a]))
    j1, y1, jp1, yp1 = _sph_jy_table(n_max, np.array([k1 * a]))
    jy, yy, _, _ = _sph_jy_table(n_max, np.array([k * ry]))
    h_a = (j0 + 1j * y0)[:, 0]
    hp_a = (jp0 + 1j * yp0)[:, 0]
    n = np.arange(n_max + 1)
    inc = 1j * k * (2 * n + 1) / (4 * np.pi) * (jy + 1j * yy)[:, 0]
    s = np.empty(n_max + 1, dtype=complex)
    for nn in range(n_max + 1):
        mat = np.array(
            [[h_a[nn], -j1[nn, 0]], [k * hp_a[nn], -k1 * jp1[nn, 0]]]
        )
        rhs = np.array([-inc[nn] * j0[nn, 0], -inc[nn] * k * jp0[nn, 0]])
        s[nn] = np.linalg.solve(mat, rhs)[0]
    r = np.linalg.norm(pts, axis=-1)
    cosg = np.clip((pts / r[:, None]) @ (y / ry), -1, 1)
    jr, yr, _, _ = _sph_jy_table(n_max, k * r)
    return np.einsum("n,np,np->p", s, jr + 1j * yr, legendre(n_max, cosg))


def test_medium_converges_to_exact_transmission_series():
    # beyond the Born regime: the voxel solve approaches the exact series for
    # a penetrable ball as the grid refines (staircase shape error dominates)
    k, a, contrast = 1.0, 0.4, 0.3
    y = np.array([1.5, 0.2, -0.1])
    pts = _surface_points(1.7, 10)
    exact = _penetrable_sphere_series(k, 1.0 + contrast, a, y, pts)
    errs = {}
    for nv in (10, 32):
        med = ball_medium([0.0, 0.0, 0.0], a, contrast, nv)
        got = solve_medium_ls(CFG, med, y).scattered(pts)
        errs[nv] = np.max(np.abs(got - exact)) / np.max(np.abs(exact))
    assert errs[10] < 0.1
    assert errs[32] < 0.01
    assert errs[32] < errs[10]
