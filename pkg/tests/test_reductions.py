"""Small closed-form cases for assembly and single steps of both schemes."""
import numpy as np
import pytest

from conftest import read_legacy_vtk
from haptofem.cli import main
from haptofem.fem import (
    FeScalarField,
    FeVectorField,
    assemble_haptotaxis_load,
    assemble_lumped_mass,
    assemble_mass,
    assemble_product_load,
    assemble_stiffness,
    assemble_weighted_lumped,
    elliptic_projection,
    negative_part_nodal,
    nodal_interpolate,
    positive_part_nodal,
)
from haptofem.io import write_csv
from haptofem.mesh import generate_unit_square_mesh
from haptofem.model import constant_chi, phi_eval
from haptofem.problems import reference_params, test1_setup, zero_setup
from haptofem.uvms import UvmsScheme, UvmsState, recover_u
from haptofem.uvmsigma import UvmSigmaScheme, UvmSigmaState, update_v
from haptofem.verification import boundedness_report, cross_scheme_diff, simulate, track_minima

M2 = generate_unit_square_mesh(2)
DT = 0.01


def const(c, mesh=M2):
    return FeScalarField(mesh, np.full(mesh.n_vertices, float(c)))


def vec(a, b, mesh=M2):
    return FeVectorField(mesh, np.tile([a, b], (mesh.n_vertices, 1)))


def no_chi(params):
    f, X = constant_chi(0.0)
    return params.replace(chi=f, chi_antiderivative=X, chi_value=0.0)


# -- assembly -------------------------------------------------------------------------


def test_interpolating_x_gives_column_values():
    f = nodal_interpolate(lambda x, y: x, M2)
    np.testing.assert_array_equal(f.values.reshape(3, 3), np.tile([0.0, 0.5, 1.0], (3, 1)))
    assert nodal_interpolate(lambda x, y: 1.0, M2).values.tolist() == [1.0] * 9


def test_positive_and_negative_parts():
    vals = np.ones(9)
    vals[4] = -2.0
    f = FeScalarField(M2, vals)
    assert positive_part_nodal(f).values[4] == 0.0 and negative_part_nodal(f).values[4] == -2.0
    g = const(3.0)
    assert np.array_equal(positive_part_nodal(g).values, g.values)
    np.testing.assert_array_equal(positive_part_nodal(f).values + negative_part_nodal(f).values, vals)


def test_weighted_lumped_cases():
    ml = assemble_lumped_mass(M2).diag
    np.testing.assert_array_equal(assemble_weighted_lumped(M2, const(1.0)).diag, ml)
    np.testing.assert_array_equal(assemble_weighted_lumped(M2, const(2.0)).diag, 2 * ml)
    w = np.ones(9)
    w[3] = 0.0
    assert assemble_weighted_lumped(M2, w).diag[3] == 0.0


def test_haptotaxis_load_single_triangle(unit_triangle):
    c = 0.7
    chi, _ = constant_chi(c)
    one = FeScalarField(unit_triangle, np.ones(3))
    sigma = FeVectorField(unit_triangle, np.tile([1.0, 0.0], (3, 1)))
    b = assemble_haptotaxis_load(unit_triangle, one, one, sigma, chi)
    np.testing.assert_allclose(b, [-c / 2, c / 2, 0.0], atol=1e-15)


def test_haptotaxis_load_vanishes():
    chi, _ = constant_chi(0.005)
    assert not assemble_haptotaxis_load(M2, const(1), const(0), vec(1, 2), chi).any()
    assert not assemble_haptotaxis_load(M2, const(1), const(1), vec(0, 0), chi).any()


def test_product_load_cases():
    assert not assemble_product_load(M2, [const(0), const(3)]).any()
    np.testing.assert_allclose(assemble_product_load(M2, [const(1)]),
                               np.asarray(assemble_mass(M2).sum(axis=1)).ravel(), atol=1e-15)


def test_elliptic_projection_of_constant():
    p = elliptic_projection(M2, lambda x, y: 0 * x + 2.0, lambda x, y: (0 * x, 0 * y))
    np.testing.assert_allclose(p.values, 2.0, atol=1e-12)


def test_reference_triangle_matrices(unit_triangle):
    np.testing.assert_allclose(assemble_mass(unit_triangle).toarray(),
                               np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-15)
    np.testing.assert_allclose(assemble_stiffness(unit_triangle).toarray(),
                               0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)
    w = FeScalarField(unit_triangle, np.full(3, 4.0))
    np.testing.assert_allclose(assemble_stiffness(unit_triangle, w).toarray(),
                               4 * assemble_stiffness(unit_triangle).toarray(), atol=1e-14)


# -- enzyme and ECM substeps ---------------------------------------------------------


def sig_state(m, v, u, s=(0.0, 0.0)):
    return UvmSigmaState(const(m), const(v), const(u), vec(*s))


def test_enzyme_zero_state():
    sch = UvmSigmaScheme(M2, reference_params(), DT)
    assert not sch.step_m(sig_state(0, 1, 0)).values.any()


def test_enzyme_constant_preserved():
    sch = UvmSigmaScheme(M2, reference_params(), DT)
    m = sch.step_m(sig_state(0.3, 1, 0))
    assert np.abs(m.values - 0.3).max() < 1e-12


def test_enzyme_decay_with_rho():
    p = reference_params().replace(rho_m=2.0)
    m = UvmSigmaScheme(M2, p, DT).step_m(sig_state(0.3, 1, 0))
    np.testing.assert_allclose(m.values, 0.3 / (1 + 2.0 * DT), rtol=1e-12)


def test_ecm_update_cases():
    assert update_v(np.ones(3), np.zeros(3), 10.0, DT).tolist() == [1.0] * 3
    assert update_v(np.array([1.0]), np.array([1.0]), 10.0, 0.01)[0] == pytest.approx(1 / 1.1, rel=1e-15)
    assert not update_v(np.zeros(3), np.ones(3), 10.0, DT).any()


# -- cell substep (sigma scheme) ----------------------------------------------------------


def test_cells_constant_without_haptotaxis():
    sch = UvmSigmaScheme(M2, no_chi(reference_params()), DT)
    u = sch.step_u(sig_state(0.2, 0.5, 0.4, (1.0, 0.5)), const(0.5))
    assert np.abs(u.values - 0.4).max() < 1e-12


def test_cells_zero_stay_zero():
    sch = UvmSigmaScheme(M2, reference_params(2.0), DT)
    assert not sch.step_u(sig_state(0.2, 0.5, 0.0, (1.0, 0.5)), const(0.5)).values.any()


def test_cells_logistic_constant_mode():
    c = 0.3
    sch = UvmSigmaScheme(M2, reference_params(2.0), DT)
    u = sch.step_u(sig_state(0.0, 0.0, c), const(0.0))
    np.testing.assert_allclose(u.values, c + 2 * DT * (c - c * c), rtol=1e-12)


# -- gradient substep ---------------------------------------------------------------------


def test_sigma_unchanged_without_enzyme():
    sch = UvmSigmaScheme(M2, reference_params(), DT)
    s = sch.step_sigma(sig_state(0, 1, 0, (0.4, -0.2)), const(0.0), const(1.0))
    np.testing.assert_allclose(s.values, np.tile([0.4, -0.2], (9, 1)), atol=1e-13)


def test_sigma_constant_enzyme():
    c = 0.5
    sch = UvmSigmaScheme(M2, reference_params(), DT)
    s = sch.step_sigma(sig_state(c, 1, 0, (0.4, -0.2)), const(c), const(1.0))
    np.testing.assert_allclose(s.values, np.tile([0.4, -0.2], (9, 1)) / (1 + 10 * DT * c), rtol=1e-11)


def test_sigma_zero_stays_zero():
    sch = UvmSigmaScheme(M2, reference_params(), DT)
    assert not sch.step_sigma(sig_state(0.5, 1, 0), const(0.5), const(1.0)).values.any()


def test_sigma_scheme_zero_state():
    st_ = UvmSigmaScheme(M2, reference_params(2.0), DT).advance(sig_state(0, 0, 0))
    assert not any(f.values.any() for f in (st_.m, st_.v, st_.u, st_.sigma))


# -- divergence-form scheme -----------------------------------------------------------


def s_state(s, v, m, params=None):
    params = params or reference_params()
    sf, vf = const(s), const(v)
    return UvmsState(sf, vf, const(m), recover_u(sf, vf, params))


def test_phi_examples():
    p = reference_params()
    assert phi_eval(0.0, p) == 1.0
    assert phi_eval(1.0, p) == pytest.approx(148.4131591025766, rel=1e-14)
    assert phi_eval(0.2, p) == pytest.approx(2.718281828459045, rel=1e-14)


def test_recover_u_examples():
    p = reference_params()
    assert not recover_u(const(0), const(0.7), p).values.any()
    np.testing.assert_array_equal(recover_u(const(0.4), const(0), p).values, 0.4)
    np.testing.assert_allclose(recover_u(const(2), const(1), p).values, 296.8263182051532, rtol=1e-14)


def test_enzyme_without_cells_in_divergence_scheme():
    sch = UvmsScheme(M2, reference_params(), DT)
    m = sch.step_m(s_state(0.0, 1.0, 0.3))
    assert np.abs(m.values - 0.3).max() < 1e-12


def test_enzyme_signs_on_test1_data():
    mesh = generate_unit_square_mesh(8)
    sch = UvmsScheme(mesh, reference_params(), DT)
    assert sch.step_m(sch.initialize(test1_setup())).min() >= -1e-12


def test_s_zero_stays_zero():
    sch = UvmsScheme(M2, reference_params(2.0), DT)
    assert not sch.step_s(s_state(0.0, 0.5, 0.3), const(0.5), const(0.3)).values.any()


def test_s_constant_without_matrix():
    sch = UvmsScheme(M2, reference_params(), DT)
    s = sch.step_s(s_state(0.25, 0.0, 0.3), const(0.0), const(0.3))
    assert np.abs(s.values - 0.25).max() < 1e-12


def test_s_logistic_constant_mode():
    c = 0.25
    sch = UvmsScheme(M2, reference_params(2.0), DT)
    s = sch.step_s(s_state(c, 0.0, 0.7), const(0.0), const(0.7))
    np.testing.assert_allclose(s.values, (c / DT + 2 * c) / (1 / DT + 2 * c), rtol=1e-12)


def test_divergence_scheme_zero_state():
    st_ = UvmsScheme(M2, reference_params(2.0), DT).advance(s_state(0, 0, 0))
    assert not any(f.values.any() for f in (st_.s, st_.v, st_.m, st_.u))


# -- harness and outputs on zero data -----------------------------------------------------


@pytest.mark.parametrize("scheme", ["uvmsigma", "uvms"])
def test_zero_run_minima_and_diagnostics(scheme):
    states = list(simulate(scheme, M2, zero_setup(), DT, 4))
    mins = track_minima(states)
    assert all(x == 0.0 for x in mins.min_u + mins.min_v + mins.min_m)
    rep = boundedness_report(states, DT)
    assert rep.max_v_sup == rep.max_m_l2 == rep.sum_m_h1_sq == rep.sum_dtm_l2_sq == 0.0


def test_zero_distance_between_schemes():
    res = cross_scheme_diff(zero_setup(), 2, 0.1, 0.2)
    assert set(res.distances.values()) == {0.0} and set(res.refined.values()) == {0.0}


def test_zero_problem_snapshots(tmp_path):
    assert main(["run", "--problem", "zero", "--n", "2", "--dt", "0.1", "--t-end", "0.2",
                 "--snapshots", "0.1,0.2", "--out", str(tmp_path)]) == 0
    for f in tmp_path.glob("*.vtk"):
        d = read_legacy_vtk(f)
        assert not any(v.any() for v in d["scalars"].values())
        assert not d["vectors"]["sigma"].any()


def test_n1_vtk_field():
    import tempfile
    from pathlib import Path

    from haptofem.io import write_vtk

    mesh = generate_unit_square_mesh(1)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "one.vtk"
        write_vtk(path, mesh, {"u": np.ones(4)})
        data = read_legacy_vtk(path)
    assert len(data["points"]) == 4 and len(data["cells"]) == 2
    assert data["scalars"]["u"].tolist() == [1.0] * 4


def test_empty_table(tmp_path):
    write_csv(tmp_path / "t.csv", ("a", "b"), [])
    assert (tmp_path / "t.csv").read_text() == "a,b\n"


def test_override_flags():
    from haptofem.cli import ConfigError, parse_config

    c = parse_config(["--scheme", "uvms", "--mu-u", "2"])
    assert (c.scheme, c.mu_u) == ("uvms", 2.0)
    with pytest.raises(ConfigError, match="dt"):
        parse_config(["--dt", "0"])


@pytest.mark.slow
def test_divergence_scheme_run_stays_nonnegative(tmp_path):
    import csv

    assert main(["run", "--scheme", "uvms", "--n", "32", "--t-end", "5", "--snapshots", "5",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "minima.csv")))
    assert len(rows) == 501
    assert min(float(r["min_u"]) for r in rows) >= -1e-12


@pytest.mark.slow
def test_sigma_scheme_run_undershoot_is_small(tmp_path):
    import csv

    assert main(["run", "--scheme", "uvmsigma", "--n", "32", "--t-end", "5", "--snapshots", "5",
                 "--out", str(tmp_path)]) == 0
    mins = [float(r["min_u"]) for r in csv.DictReader(open(tmp_path / "minima.csv"))]
    negative = [x for x in mins if x < 0]
    assert negative and max(abs(x) for x in negative) <= 1e-3
