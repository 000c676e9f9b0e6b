"""Chaos masses: mode identities, expected totals, windows, moment scans."""

import numpy as np
import pytest

from todalab import chaos, fields as fl, rootdata as rd, surface as sf
from todalab.fields import FieldKind


@pytest.fixture(scope="module")
def ens():
    rs = rd.build_root_system(rd.LieType("A", 2))
    fd = rd.fold(rs, rd.outer_automorphisms(rs)[0])
    return fl.make_ensemble(sf.grid_surface(6, 6), rs, fd, seed=303)


@pytest.fixture(scope="module")
def cardy_ens():
    rs = rd.build_root_system(rd.LieType("A", 2))
    tau = [a for a in rd.outer_automorphisms(rs) if a.order == 2][0]
    return fl.make_ensemble(sf.grid_surface(6, 6), rs, rd.fold(rs, tau), seed=304)


def test_zero_direction_masses_are_areas(ens):
    spec = chaos.bulk_spec(ens, np.zeros(2), chaos.Mode.RAW)
    X = fl.sample(ens, FieldKind.NEUMANN, 3)
    out = chaos.gmc_bulk(ens, FieldKind.NEUMANN, spec, X[0])
    assert np.allclose(out.masses, ens.surface.area, rtol=0, atol=0)
    assert out.total == pytest.approx(ens.surface.total_area())


def test_wick_expected_total_is_area_sum(ens):
    gamma = 0.8
    u = gamma * ens.rs.roots[0]
    spec = chaos.bulk_spec(ens, u, chaos.Mode.WICK)
    assert chaos.expected_total_mass(ens, FieldKind.NEUMANN, spec) == pytest.approx(
        ens.surface.total_area())
    n = 30000
    X = fl.sample(ens, FieldKind.NEUMANN, n)
    totals = chaos.bulk_masses(ens, FieldKind.NEUMANN, spec, X).sum(axis=1)
    se = totals.std(ddof=1) / np.sqrt(n)
    assert abs(totals.mean() - ens.surface.total_area()) < 3 * se


def test_raw_expected_total_matches_mc(ens):
    """u = 0.8 e_1 on a grid: closed-form Gaussian expectation vs MC."""
    gamma = 0.8
    spec = chaos.bulk_spec(ens, gamma * ens.rs.roots[0], chaos.Mode.RAW)
    expected = chaos.expected_total_mass(ens, FieldKind.NEUMANN, spec)
    n = 60000
    X = fl.sample(ens, FieldKind.NEUMANN, n)
    totals = chaos.bulk_masses(ens, FieldKind.NEUMANN, spec, X).sum(axis=1)
    se = totals.std(ddof=1) / np.sqrt(n)
    assert abs(totals.mean() - expected) < 3 * se


def test_raw_wick_ratio_exact_per_sample(ens):
    gamma = 0.9
    u = gamma * ens.rs.roots[1]
    raw = chaos.bulk_spec(ens, u, chaos.Mode.RAW)
    wick = chaos.bulk_spec(ens, u, chaos.Mode.WICK)
    X = fl.sample(ens, FieldKind.NEUMANN, 64)
    m_raw = chaos.bulk_masses(ens, FieldKind.NEUMANN, raw, X)
    m_wick = chaos.bulk_masses(ens, FieldKind.NEUMANN, wick, X)
    var = ens.wick_diagonal(FieldKind.NEUMANN, u)
    ratio = chaos.raw_wick_ratio(raw, var)
    assert np.abs(m_raw / m_wick - ratio[None, :]).max() < 1e-12


def test_masses_positive(ens):
    spec = chaos.bulk_spec(ens, 0.7 * ens.rs.roots[0], chaos.Mode.RAW)
    X = fl.sample(ens, FieldKind.NEUMANN, 16)
    assert chaos.bulk_masses(ens, FieldKind.NEUMANN, spec, X).min() > 0


def test_bulk_window_rejection(ens):
    # |u|^2 = 4 exactly on the window edge is rejected
    u = np.sqrt(2.0) * ens.rs.roots[0]  # |u|^2 = 4
    with pytest.raises(ValueError, match="supercritical"):
        chaos.bulk_spec(ens, u)


def test_boundary_window_and_exponent(cardy_ens):
    ens = cardy_ens
    gamma = 0.8
    f1 = ens.folding.folded_roots[0]
    u = gamma * f1 / 2
    spec = chaos.boundary_spec(ens, u, chaos.Mode.RAW)
    pNu = ens.folding.p_N @ u
    # the lattice power is |pN u|^2, not |u|^2/2
    assert spec.raw_exponent == pytest.approx(float(pNu @ pNu))
    assert spec.raw_exponent != pytest.approx(float(u @ u) / 2)
    with pytest.raises(ValueError, match="supercritical"):
        chaos.boundary_spec(ens, 2.5 * f1)


def test_dirichlet_direction_boundary_masses_are_lengths(cardy_ens):
    """u in the complementary subspace pairs to zero on the boundary."""
    ens = cardy_ens
    rng = np.random.default_rng(2)
    u = ens.folding.p_D @ rng.standard_normal(2)
    spec = chaos.boundary_spec(ens, u, chaos.Mode.RAW)
    X = fl.sample_cardy(ens, 8)
    masses = chaos.boundary_masses(ens, FieldKind.CARDY, spec, X)
    bidx = ens.surface.boundary_list()
    ell = ens.surface.boundary_length[bidx]
    delta_pow = spec.mesh_scale ** spec.raw_exponent
    assert np.abs(masses - (delta_pow * ell)[None, :]).max() < 1e-10


def test_wick_boundary_expected_total(cardy_ens):
    ens = cardy_ens
    gamma = 0.7
    u = gamma * ens.folding.folded_roots[0] / 2
    spec = chaos.boundary_spec(ens, u, chaos.Mode.WICK)
    bidx = ens.surface.boundary_list()
    want = ens.surface.boundary_length[bidx].sum()
    assert chaos.expected_total_mass(ens, FieldKind.CARDY, spec) == pytest.approx(want)
    n = 30000
    X = fl.sample_cardy(ens, n)
    totals = chaos.boundary_masses(ens, FieldKind.CARDY, spec, X).sum(axis=1)
    se = totals.std(ddof=1) / np.sqrt(n)
    assert abs(totals.mean() - want) < 3 * se


def test_moment_scan_p1_and_negative(ens):
    gamma = 0.8
    spec = chaos.bulk_spec(ens, gamma * ens.rs.roots[0], chaos.Mode.WICK)
    rep = chaos.moment_scan(ens, FieldKind.NEUMANN, spec, (-1.0, 1.0), 20000)
    by_p = {p: verdict for p, _, _, verdict, _ in rep.rows}
    assert by_p[1.0] == "finite"
    assert by_p[-1.0] == "finite"
    est1 = [e for p, e, _, _, _ in rep.rows if p == 1.0][0]
    assert est1 == pytest.approx(ens.surface.total_area(), rel=0.05)


def test_moment_threshold_prediction(ens):
    # A2, gamma=1 on the long root: gamma_i^2 = 2 so the bulk frontier is 2
    gamma = 1.0
    spec = chaos.bulk_spec(ens, gamma * ens.rs.roots[0], chaos.Mode.WICK)
    rep = chaos.moment_scan(ens, FieldKind.NEUMANN, spec, (1.0,), 2000)
    assert rep.predicted_threshold == pytest.approx(2.0)
    # with an insertion the frontier can only tighten
    alpha = 0.5 * ens.rs.roots[0]
    p_shift = chaos.predicted_bulk_threshold(ens, gamma, 0, (5, alpha))
    assert p_shift <= 2.0


def test_moment_scan_frontier_qualitative():
    """A1, gamma = 1: running means stabilize at p = 1.5 and blow up at 2.5
    across mesh refinements (qualitative, fixed seed)."""
    rs = rd.build_root_system(rd.LieType("A", 1))
    fd = rd.fold(rs, rd.outer_automorphisms(rs)[0])
    verdicts = {}
    for level, size in enumerate((8, 12, 16)):
        ens = fl.make_ensemble(sf.grid_surface(size, size), rs, fd, seed=777)
        spec = chaos.bulk_spec(ens, 1.0 * rs.roots[0], chaos.Mode.WICK)
        rep = chaos.moment_scan(ens, FieldKind.NEUMANN, spec, (1.5, 2.5), 30000,
                                mesh_level=level)
        assert rep.predicted_threshold == pytest.approx(2.0)
        for p, _, _, verdict, lv in rep.rows:
            verdicts[(lv, p)] = verdict
    assert all(verdicts[(lv, 1.5)] == "finite" for lv in (0, 1, 2))
    assert all(verdicts[(lv, 2.5)] == "divergent" for lv in (0, 1, 2))


def test_moment_report_csv_schema(ens):
    spec = chaos.bulk_spec(ens, 0.5 * ens.rs.roots[0], chaos.Mode.WICK)
    rep = chaos.moment_scan(ens, FieldKind.NEUMANN, spec, (1.0,), 1000)
    csv = rep.to_csv()
    header, row = csv.strip().split("\n")[:2]
    assert header == "p,estimate,stderr,verdict,mesh_level"
    assert len(row.split(",")) == 5


def test_wick_total_mass_distribution_tightens_under_refinement():
    """KS distance between consecutive refinement levels decreases (the
    desk-scale stand-in for convergence of the chaos measure)."""
    rs = rd.build_root_system(rd.LieType("A", 1))
    fd = rd.fold(rs, rd.outer_automorphisms(rs)[0])
    gamma = 1.0
    totals = []
    for size in (3, 6, 12):
        # refine the unit square: cell area 1/size^2 keeps total area fixed
        s = sf.grid_surface(size, size, cell_area=1.0 / size**2)
        ens = fl.make_ensemble(s, rs, fd, seed=909)
        spec = chaos.bulk_spec(ens, gamma * rs.roots[0], chaos.Mode.WICK)
        X = fl.sample(ens, FieldKind.NEUMANN, 30000)
        totals.append(np.sort(chaos.bulk_masses(ens, FieldKind.NEUMANN, spec, X).sum(axis=1)))

    def ks(a, b):
        grid = np.sort(np.concatenate([a, b]))
        fa = np.searchsorted(a, grid, side="right") / a.size
        fb = np.searchsorted(b, grid, side="right") / b.size
        return np.abs(fa - fb).max()

    d01 = ks(totals[0], totals[1])
    d12 = ks(totals[1], totals[2])
    assert d12 < d01


def test_moment_scan_region_mask_and_shift(ens):
    """Masked scans see only the sub-region; an insertion shift tilts the
    masses by the exact drift kernel."""
    gamma = 0.8
    spec = chaos.bulk_spec(ens, gamma * ens.rs.roots[0], chaos.Mode.WICK)
    mask = np.zeros(ens.surface.n_vertices, dtype=bool)
    mask[:10] = True
    rep = chaos.moment_scan(ens, FieldKind.NEUMANN, spec, (1.0,), 20000,
                            region_mask=mask)
    est = rep.rows[0][1]
    want = ens.surface.area[mask].sum()  # Wick mode: E mass_v = a_v
    assert abs(est - want) < 4 * rep.rows[0][2] + 1e-12
    alpha = 0.15 * ens.rs.roots[0]
    rep_shift = chaos.moment_scan(ens, FieldKind.NEUMANN, spec, (1.0,), 60000,
                                  shift_charge=(5, alpha), region_mask=mask)
    H = ens.drift_field(FieldKind.NEUMANN, [(5, alpha)])
    tilt = np.exp(H @ (gamma * ens.rs.roots[0]))
    want_shift = (ens.surface.area * tilt)[mask].sum()
    assert abs(rep_shift.rows[0][1] - want_shift) < 4 * rep_shift.rows[0][2]
