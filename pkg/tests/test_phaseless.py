import numpy as np
import pytest

from nearphase.acoustic import (
    AcousticConfig,
    ball_medium,
    solve_medium_ls,
    solve_sphere_point_source,
    sound_soft_sphere,
    impedance_sphere,
)
from nearphase.errors import (
    DomainError,
    IllPosedConfigError,
    InconsistentDataError,
    InsufficientDataError,
)
from nearphase.geometry import sphere_grid
from nearphase.phaseless import (
    ConjugatedField,
    classify_branch,
    conjugate_discriminator,
    em_phase_diff_records,
    phase_diff_records,
    recover_cos_delta,
    recover_real_cross,
    synthesize_acoustic,
    synthesize_em,
)

CFG = AcousticConfig(k=1.0, R1=1.0, R2=2.0)
SOFT = sound_soft_sphere(0.5)


@pytest.fixture(scope="module")
def small_dataset():
    g1 = sphere_grid(1.0, 4, 8)
    g2 = sphere_grid(2.0, 4, 8)
    return synthesize_acoustic(CFG, SOFT, g1, g2, y0_index=3), g1, g2


def _acoustic_census(n1, n2, y0_idx, include_extra=True):
    singles = n1 * (n1 - 1) + n2 + n2 * (n2 - 1)
    sup_11 = sum(
        (n1 - 1 if j == y0_idx else n1 - 2) for j in range(n1)
    )
    sup_22 = n2 * (n2 - 1)
    extra = n2 if include_extra else 0
    return singles + sup_11 + sup_22 + extra


def test_acoustic_census(small_dataset):
    ds, g1, g2 = small_dataset
    assert len(ds) == _acoustic_census(len(g1), len(g2), 3)


def test_acoustic_census_16x32_formula():
    # the closed-form census at the default grid sizes, no synthesis needed
    n = 16 * 32
    expected = n * (n - 1) + n + n * (n - 1) + (n - 1) + (n - 1) * (n - 2) + n * (n - 1) + n
    assert _acoustic_census(n, n, 0) == expected


def test_triangle_bound(small_dataset):
    ds, _, _ = small_dataset
    a = ds.arrays
    sup = a["kind"] == 1
    tab = phase_diff_records(ds)
    m_sup = a["modulus"][sup]
    assert np.all(m_sup <= tab.r_xy + tab.r_xy0 + 1e-12)


def test_determinism_byte_identical(tmp_path):
    g1 = sphere_grid(1.0, 3, 6)
    g2 = sphere_grid(2.0, 3, 6)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    synthesize_acoustic(CFG, SOFT, g1, g2, 1).to_jsonl(p1)
    synthesize_acoustic(CFG, SOFT, g1, g2, 1).to_jsonl(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_jsonl_round_trip(tmp_path, small_dataset):
    from nearphase.phaseless import PhaselessDataset

    ds, _, _ = small_dataset
    path = tmp_path / "ds.jsonl"
    ds.to_jsonl(path)
    back = PhaselessDataset.from_jsonl(path)
    assert back.mode == ds.mode
    assert len(back) == len(ds)
    for key in ds.arrays:
        assert np.array_equal(back.arrays[key], ds.arrays[key]), key


def test_truncated_jsonl_raises(tmp_path, small_dataset):
    from nearphase.phaseless import PhaselessDataset

    ds, _, _ = small_dataset
    path = tmp_path / "ds.jsonl"
    ds.to_jsonl(path)
    lines = path.read_text().splitlines()
    (tmp_path / "bad.jsonl").write_text("\n".join(lines[:-5]) + "\n")
    with pytest.raises(ValueError):
        PhaselessDataset.from_jsonl(tmp_path / "bad.jsonl")


def test_recover_real_cross_closed_cases():
    assert recover_real_cross(2.0, 1.0, 1.0) == pytest.approx(1.0)
    assert recover_real_cross(0.0, 1.0, 1.0) == pytest.approx(-1.0)


def test_recover_cos_delta_closed_cases():
    r = recover_cos_delta((1, 0), (1, 1), 2.0, 3.0, 6.0, tol_amp=1e-12)
    assert r.defined and r.cos_delta == pytest.approx(1.0)
    r = recover_cos_delta((1, 0), (1, 1), 2.0, 3.0, 0.0, tol_amp=1e-12)
    assert r.cos_delta == pytest.approx(0.0)
    r = recover_cos_delta((1, 0), (1, 1), 0.0, 3.0, 0.0, tol_amp=1e-12)
    assert not r.defined and r.cos_delta is None
    with pytest.raises(InconsistentDataError):
        recover_cos_delta((1, 0), (1, 1), 1.0, 1.0, 1.1, tol_amp=1e-12)


def test_phase_recovery_against_direct_oracle(small_dataset):
    ds, g1, g2 = small_dataset
    tab = phase_diff_records(ds)
    assert tab.defined_fraction() >= 0.8
    y0 = g1.cart[3]
    f_y0 = solve_sphere_point_source(CFG, SOFT, y0)
    # verify every record on the outer sphere against the complex fields
    rng = np.random.default_rng(0)
    idx = rng.choice(len(tab), size=60, replace=False)
    for i in idx:
        xs, x_i = tab.x_ref[i]
        ys, y_i = tab.y_ref[i]
        x = (g1 if xs == 1 else g2).cart[x_i]
        y = (g1 if ys == 1 else g2).cart[y_i]
        f_y = solve_sphere_point_source(CFG, SOFT, y)
        w_xy = f_y.total(x)
        w_xy0 = f_y0.total(x)
        direct = np.real(w_xy * np.conj(w_xy0))
        scale = abs(w_xy) * abs(w_xy0)
        assert abs(tab.real_cross[i] - direct) <= 1e-10 * max(scale, 1e-12)
        if tab.defined[i]:
            want = np.cos(np.angle(w_xy) - np.angle(w_xy0))
            assert abs(tab.cos_delta[i] - want) <= 1e-9


def test_dataset_modulus_symmetry(small_dataset):
    # |w(x, y)| = |w(y, x)| for same-sphere single samples
    ds, g1, _ = small_dataset
    a = ds.arrays
    singles = (a["kind"] == 0) & (a["x_sphere"] == a["y_sphere"])
    key = {}
    for i in np.nonzero(singles)[0]:
        key[(int(a["x_sphere"][i]), int(a["x_idx"][i]), int(a["y_idx"][i]))] = a[
            "modulus"
        ][i]
    checked = 0
    for (s, xi, yi), m in key.items():
        m_swap = key.get((s, yi, xi))
        if m_swap is not None:
            assert m == pytest.approx(m_swap, rel=1e-9)
            checked += 1
    assert checked > 0


def test_classify_branch_cases():
    rng = np.random.default_rng(4)
    ref = rng.normal(size=40) + 1j * rng.normal(size=40)
    v = classify_branch(ref.copy(), ref)
    assert v.label == "identity"
    v = classify_branch(np.conj(ref), ref)
    assert v.label == "conjugate"
    assert v.err_identity / max(v.err_conjugate, 1e-300) > 1e4
    v = classify_branch(ref * np.exp(0.3j), ref)
    assert v.label == "neither"
    with pytest.raises(InsufficientDataError):
        classify_branch(ref[:5], ref[:5])


def test_classify_branch_distinguishes_scatterers():
    g = sphere_grid(1.0, 4, 8)
    y = np.array([0.0, 1.8, 0.4])
    f_a = solve_sphere_point_source(CFG, SOFT, y)
    f_b = solve_sphere_point_source(CFG, sound_soft_sphere(0.55), y)
    v = classify_branch(f_b.total(g.cart), f_a.total(g.cart))
    assert v.label == "neither"


def _discriminator_grids():
    return sphere_grid(1.0, 10, 20), sphere_grid(2.0, 10, 20)


def _y0():
    t0, p0 = 1.0, 0.37
    return np.array(
        [np.sin(t0) * np.cos(p0), np.sin(t0) * np.sin(p0), np.cos(t0)]
    ) * 1.0


@pytest.mark.parametrize(
    "scatterer",
    [sound_soft_sphere(0.5), impedance_sphere(0.5, 1.0)],
    ids=["sound_soft", "impedance"],
)
def test_discriminator_obstacles(scatterer):
    g1, g2 = _discriminator_grids()
    y0 = _y0()
    f = solve_sphere_point_source(CFG, scatterer, y0)
    true_pair = conjugate_discriminator(CFG, f, f, g1, g2)
    assert true_pair.verdict == "consistent_radiating"
    assert "vacuous" in true_pair.note
    injected = conjugate_discriminator(CFG, f, ConjugatedField(f), g1, g2)
    assert injected.verdict == "conjugate_branch_rejected"
    assert injected.margin >= 10.0
    assert injected.interior_max < 1e-8


def test_discriminator_medium():
    med = ball_medium([0.05, 0.0, 0.0], 0.3, 0.2, 10)
    g1, g2 = _discriminator_grids()
    f = solve_medium_ls(CFG, med, _y0())
    assert conjugate_discriminator(CFG, f, f, g1, g2).verdict == "consistent_radiating"
    inj = conjugate_discriminator(CFG, f, ConjugatedField(f), g1, g2)
    assert inj.verdict == "conjugate_branch_rejected"
    assert inj.margin >= 10.0


def test_discriminator_refuses_eigenvalue_adjacent_k():
    g1, g2 = _discriminator_grids()
    cfg_bad = AcousticConfig(k=np.pi, R1=1.0, R2=2.0)
    f = solve_sphere_point_source(cfg_bad, SOFT, _y0())
    with pytest.raises(IllPosedConfigError):
        conjugate_discriminator(cfg_bad, f, f, g1, g2)


def test_discriminator_rejects_grid_containing_y0():
    g1, g2 = _discriminator_grids()
    y0 = g1.cart[7]
    f = solve_sphere_point_source(CFG, SOFT, y0)
    with pytest.raises(DomainError):
        conjugate_discriminator(CFG, f, f, g1, g2)


# ------------------------------------------------------------------- EM

@pytest.fixture(scope="module")
def em_dataset():
    # even n_theta keeps rows off the equator and odd n_phi avoids
    # antipodal azimuth pairs; both configurations share a mirror plane on
    # which the mixed tangential channels vanish identically
    g1 = sphere_grid(1.0, 4, 5)
    g2 = sphere_grid(2.0, 4, 5)
    return synthesize_em(CFG, 0.5, g1, g2), g1, g2


def _em_census(n1, n2):
    set1 = 2 * 3 * n1 * (n1 - 1) ** 2
    set2 = 2 * 2 * 2 * 2 * n1 * (n1 - 1) * n2
    return set1 + set2


def test_em_census(em_dataset):
    ds, g1, g2 = em_dataset
    assert len(ds) == _em_census(len(g1), len(g2))


def test_em_redundancy_remark(em_dataset):
    # tangential reciprocity: the (m=phi, tau=(0,1)) samples coincide with the
    # (m=theta, tau=(1,0)) samples under the x <-> y2 index swap
    ds, g1, _ = em_dataset
    a = ds.arrays
    set1 = a["set_id"] == 1
    s01 = set1 & (a["m"] == 0) & (a["tau1"] == 0) & (a["tau2"] == 1)
    s10 = set1 & (a["m"] == 1) & (a["tau1"] == 1) & (a["tau2"] == 0)
    lut = {}
    for i in np.nonzero(s10)[0]:
        lut[(int(a["x_idx"][i]), int(a["y1_idx"][i]))] = a["modulus"][i]
    checked = 0
    for i in np.nonzero(s01)[0]:
        xi, y2i = int(a["x_idx"][i]), int(a["y2_idx"][i])
        swap = lut.get((y2i, xi))
        if swap is not None:
            assert a["modulus"][i] == pytest.approx(swap, abs=1e-10)
            checked += 1
    assert checked > 0


def test_em_tau_additivity(em_dataset):
    # complex fields obey |E1 + E2|^2 - |E1|^2 - |E2|^2 = 2 Re(E1 conj E2),
    # which bounds each superposed modulus by the single-activation ones
    ds, _, _ = em_dataset
    tab = em_phase_diff_records(ds, set_id=1)
    a = ds.arrays
    sup = (a["set_id"] == 1) & (a["tau1"] == 1) & (a["tau2"] == 1)
    m_sup = a["modulus"][sup]
    assert np.all(m_sup <= tab.r_xy + tab.r_xy0 + 1e-12)


def test_em_determinism():
    g1 = sphere_grid(1.0, 2, 4)
    g2 = sphere_grid(2.0, 2, 4)
    d1 = synthesize_em(CFG, 0.5, g1, g2)
    d2 = synthesize_em(CFG, 0.5, g1, g2)
    assert np.array_equal(d1.arrays["modulus"], d2.arrays["modulus"])


def test_em_phase_recovery_against_direct_oracle(em_dataset):
    from nearphase.em import DipoleSource, solve_pec_sphere_dipole, tangential_measurement

    ds, g1, g2 = em_dataset
    for set_id in (1, 2):
        tab = em_phase_diff_records(ds, set_id=set_id)
        assert tab.defined_fraction() >= 0.8
        rng = np.random.default_rng(set_id)
        idx = rng.choice(len(tab), size=25, replace=False)
        for i in idx:
            if not tab.defined[i]:
                continue
            m_lab, n_lab, l_lab = tab.channel[i]
            x_i = int(tab.x_ref[i][1])
            y2_sphere, y2_i = int(tab.y_ref[i][0]), int(tab.y_ref[i][1])
            # y1 recovered from the superposed sample arrays
            a = ds.arrays
            sup = (a["set_id"] == set_id) & (a["tau1"] == 1) & (a["tau2"] == 1)
            row = np.nonzero(sup)[0][i]
            y1_i = int(a["y1_idx"][row])
            g_y2 = g1 if y2_sphere == 1 else g2
            fr_x = g1.frame(x_i)
            fr1, fr2 = g1.frame(y1_i), g_y2.frame(y2_i)
            p1 = fr1.e_phi if n_lab == 0 else fr1.e_theta
            p2 = g_y2.frame(y2_i).e_phi if l_lab == 0 else fr2.e_theta
            f1 = solve_pec_sphere_dipole(CFG, 0.5, DipoleSource(y=g1.cart[y1_i], p=p1))
            f2 = solve_pec_sphere_dipole(CFG, 0.5, DipoleSource(y=g_y2.cart[y2_i], p=p2))
            x = g1.cart[x_i]
            mname = "phi" if m_lab == 0 else "theta"
            t1 = tangential_measurement(f1.total(x), fr_x, mname)
            t2 = tangential_measurement(f2.total(x), fr_x, mname)
            direct_rc = np.real(t1 * np.conj(t2))
            scale = max(abs(t1) * abs(t2), 1e-12)
            assert abs(tab.real_cross[i] - direct_rc) <= 1e-9 * max(scale, 1.0)
            want = np.cos(np.angle(t1) - np.angle(t2))
            assert abs(tab.cos_delta[i] - want) <= 1e-9


def test_em_rejects_pole_grid():
    g1 = sphere_grid(1.0, 3, 4)
    bad = sphere_grid(2.0, 3, 4)
    bad.theta = bad.theta.copy()
    bad.theta[0] = 0.0
    with pytest.raises(DomainError):
        synthesize_em(CFG, 0.5, g1, bad)


def test_no_degenerate_channels(em_dataset):
    ds, _, _ = em_dataset
    assert ds.meta["flags"]["degenerate_channels"] == []


def test_classify_branch_on_em_tangential_samples():
    from nearphase.em import DipoleSource, solve_pec_sphere_dipole, tangential_measurement

    g = sphere_grid(1.0, 4, 5)
    fy = g.frame(7)
    f = solve_pec_sphere_dipole(
        CFG, 0.5, DipoleSource(y=g.cart[7], p=fy.e_phi)
    )
    idx = [i for i in range(len(g)) if i != 7]
    samples = np.array(
        [
            tangential_measurement(f.total(g.cart[i]), g.frame(i), "phi")
            for i in idx
        ]
    )
    assert classify_branch(samples.copy(), samples).label == "identity"
    assert classify_branch(np.conj(samples), samples).label == "conjugate"


def test_em_jsonl_round_trip(tmp_path, em_dataset):
    from nearphase.phaseless import PhaselessDataset

    ds, _, _ = em_dataset
    path = tmp_path / "em.jsonl"
    ds.to_jsonl(path)
    back = PhaselessDataset.from_jsonl(path)
    assert back.mode == "em"
    for key in ds.arrays:
        assert np.array_equal(back.arrays[key], ds.arrays[key]), key


def test_discriminator_across_wavenumber():
    cfg = AcousticConfig(k=3.3, R1=1.2, R2=2.1)
    g1 = sphere_grid(1.2, 10, 20)
    g2 = sphere_grid(2.1, 10, 20)
    t0, p0 = 1.0, 0.37
    y0 = 1.2 * np.array(
        [np.sin(t0) * np.cos(p0), np.sin(t0) * np.sin(p0), np.cos(t0)]
    )
    f = solve_sphere_point_source(cfg, sound_soft_sphere(0.6), y0)
    assert conjugate_discriminator(cfg, f, f, g1, g2).verdict == "consistent_radiating"
    inj = conjugate_discriminator(cfg, f, ConjugatedField(f), g1, g2)
    assert inj.verdict == "conjugate_branch_rejected" and inj.margin >= 10.0
