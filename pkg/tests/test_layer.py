"""Truncated layer: mesh, solver, far-field template, capacity extraction."""
import dataclasses
import json
import math

import numpy as np
import pytest

from platecap.elastic import (full_operator, isotropic_stiffness,
                              rigid_motion_matrix)
from platecap.fem import MeshError, SolverError, StructuredGrid
from platecap.fundamental import construct_fundamental, PhiSharp
from platecap.inequalities import ContractError
from platecap.layer import (CapacityMatrix, ExtractionError,
                            FarFieldExpansion, LayerMesh, capacity_json,
                            decay_csv, extract_capacity, fit_rigid,
                            grid_interpolate, layer_mesh,
                            manufactured_solution, rigid_sharp,
                            solve_layer_problem, strain_energy,
                            symmetry_and_decay_report, v01_norm)
from platecap.reduction import build_dimension_reduction

A1 = isotropic_stiffness(1.0, 1.0)


@pytest.fixture(scope="module")
def ops():
    return build_dimension_reduction(A1)


@pytest.fixture(scope="module")
def phi(ops):
    A0 = np.array([[float(x) for x in row] for row in ops.reduced])
    mem, bend = construct_fundamental(A0, n_angular=64)
    return PhiSharp(mem, bend)


@pytest.fixture(scope="module")
def expansion(phi, ops):
    return FarFieldExpansion(phi, ops)


class TestLayerMesh:
    def test_default_geometry(self):
        m = layer_mesh()
        ax = m.grid.axes[0]
        assert m.T == 8.0 and m.n_z == 6
        assert np.allclose(ax, -ax[::-1])           # symmetric axis
        assert ax[0] == -8.0 and ax[-1] == 8.0
        core = ax[(ax >= 0) & (ax <= m.core_radius + 1e-12)]
        assert np.allclose(np.diff(core), m.inner_step)
        tail = np.diff(ax[ax >= m.core_radius - 1e-12])
        assert 1.0 < m.growth <= m.growth_cap + 1e-12
        assert np.all(np.diff(tail) > -1e-12)       # nondecreasing tail
        assert np.allclose(m.grid.axes[2], np.linspace(-0.5, 0.5, 7))

    def test_patch_capture_unit_disk(self):
        m = layer_mesh()
        pts = m.grid.nodes()[m.theta_nodes]
        assert len(m.theta_nodes) > 0
        assert np.all(pts[:, 2] == -0.5)            # bottom face only
        r = np.hypot(pts[:, 0], pts[:, 1])
        assert r.max() <= 1.0 + 1e-9
        assert m.R_theta == pytest.approx(1.0)
        assert m.R_theta >= 2 * m.inner_step        # two rings resolved
        assert m.theta_spec.startswith("disk")

    def test_custom_indicator(self):
        half = lambda eta: (np.abs(eta[:, 0]) <= 0.6) & (np.abs(eta[:, 1]) <= 0.6)
        m = layer_mesh(theta=half)
        pts = m.grid.nodes()[m.theta_nodes][:, :2]
        assert np.abs(pts).max() <= 0.6 + 1e-12
        assert "indicator" in m.theta_spec
        r = layer_mesh(theta=half, R_theta=1.2)
        assert r.R_theta == pytest.approx(1.2)

    def test_validation_errors(self):
        with pytest.raises(MeshError):
            layer_mesh(T=-1.0)
        with pytest.raises(MeshError):
            layer_mesh(n_z=1)
        with pytest.raises(MeshError):
            layer_mesh(growth_cap=1.0)
        with pytest.raises(MeshError):
            layer_mesh(inner_step=0.3)              # must divide the core
        with pytest.raises(MeshError):              # nothing captured
            layer_mesh(theta=lambda eta: np.zeros(len(eta), dtype=bool))
        with pytest.raises(MeshError):              # declared radius too small
            layer_mesh(R_theta=0.5)
        with pytest.raises(MeshError):              # patch must stay < T/4
            layer_mesh(T=3.5)
        with pytest.raises(MeshError):              # fewer than two rings
            layer_mesh(inner_step=1.0)
        with pytest.raises(MeshError):              # core must cover patch
            layer_mesh(core_radius=0.5, inner_step=0.25)

    def test_outer_wall_nodes(self):
        m = layer_mesh()
        pts = m.grid.nodes()[m.outer_nodes]
        onwall = (np.abs(np.abs(pts[:, 0]) - m.T) < 1e-12) | \
                 (np.abs(np.abs(pts[:, 1]) - m.T) < 1e-12)
        assert onwall.all()
        n = len(m.grid.axes[0])
        assert len(m.outer_nodes) == (4 * n - 4) * (m.n_z + 1)

    def test_refined(self):
        # refinement halves the tail-grading increment at fixed box and
        # core: the matching annulus gets finer cells
        m = layer_mesh(n_z=4, inner_step=0.5, growth_cap=1.5)
        r = m.refined()
        assert r.T == m.T and r.n_z == m.n_z
        assert r.inner_step == pytest.approx(m.inner_step)
        assert r.growth_cap == pytest.approx(1.25)
        assert r.growth < m.growth
        assert r.grid.n_nodes > m.grid.n_nodes

    def test_with_box(self):
        m = layer_mesh()
        w = m.with_box(12.0)
        assert w.T == pytest.approx(12.0) and w.n_z == m.n_z
        assert w.inner_step == pytest.approx(m.inner_step)
        # equal tail cells: the grading increment shrinks by the box ratio
        # so cells at a given radius keep their width when T grows
        assert w.growth_cap == pytest.approx(
            1.0 + (m.growth - 1.0) * m.T / 12.0)
        raw = m.with_box(12.0, equal_tail_cells=False)
        assert raw.growth_cap == pytest.approx(m.growth_cap)

    def test_signature_identifies_mesh(self):
        a, b = layer_mesh(), layer_mesh(n_z=8)
        assert a.signature != b.signature
        assert a.signature == layer_mesh().signature


class TestRigidSharp:
    def test_matches_admissible_rigid_columns(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(40, 3))
        D = rigid_sharp(pts)
        assert D.shape == (40, 3, 4)
        keep = [0, 1, 3, 4]                         # drop e3 and the spin
        for q, p in enumerate(pts):
            full = np.asarray(rigid_motion_matrix(p), dtype=float)
            assert np.array_equal(D[q], full[:, keep])

    def test_columns_are_exact_discrete_fields(self):
        # trilinear interpolation reproduces every rigid column exactly
        m = layer_mesh(T=6.0, n_z=3, inner_step=0.5)
        nodes = m.grid.nodes()
        D = rigid_sharp(nodes)
        rng = np.random.default_rng(4)
        pts = rng.uniform([-5.9, -5.9, -0.49], [5.9, 5.9, 0.49], size=(200, 3))
        for a in range(4):
            vals = grid_interpolate(m.grid, D[:, :, a], pts)
            assert np.abs(vals - rigid_sharp(pts)[:, :, a]).max() < 1e-12


class TestInterpolation:
    def test_reproduces_trilinear_functions(self):
        g = StructuredGrid([np.array([0.0, 0.3, 1.0]),
                            np.array([-1.0, 0.0, 2.0]),
                            np.array([0.0, 0.5, 0.75, 1.0])])
        f = lambda p: (2.0 - p[:, 0] + 3.0 * p[:, 1] * p[:, 2]
                       + p[:, 0] * p[:, 1] * p[:, 2])
        vals = f(g.nodes())
        rng = np.random.default_rng(5)
        pts = rng.uniform([0, -1, 0], [1, 2, 1], size=(100, 3))
        assert np.abs(grid_interpolate(g, vals, pts) - f(pts)).max() < 1e-12

    def test_outside_raises(self):
        g = StructuredGrid([np.array([0.0, 1.0])] * 3)
        with pytest.raises(MeshError):
            grid_interpolate(g, np.zeros(8), np.array([[0.5, 0.5, 1.5]]))

    def test_vector_and_scalar_shapes(self):
        g = StructuredGrid([np.array([0.0, 1.0])] * 3)
        vals = np.arange(8.0)
        out = grid_interpolate(g, vals, np.array([[0.5, 0.5, 0.5]]))
        assert out.shape == (1,)
        out3 = grid_interpolate(g, np.tile(vals[:, None], (1, 3)),
                                np.array([[0.5, 0.5, 0.5]]))
        assert out3.shape == (1, 3) and np.allclose(out3, out[0])


class TestSolveLayerProblem:
    def test_zero_data_zero_solution(self):
        m = layer_mesh(T=4.5, n_z=3, inner_step=0.5)
        vals, rep = solve_layer_problem(m, A1)
        assert np.abs(vals).max() == 0.0

    def test_empty_patch_free_outer_is_singular(self):
        m = layer_mesh(T=4.5, n_z=3, inner_step=0.5)
        bare = dataclasses.replace(m, theta_nodes=np.empty(0, dtype=int))
        with pytest.raises(SolverError):
            solve_layer_problem(bare, A1, outer_closure="free")

    def test_unknown_closure_rejected(self):
        m = layer_mesh(T=4.5, n_z=3, inner_step=0.5)
        with pytest.raises(ValueError):
            solve_layer_problem(m, A1, outer_closure="robin")

    def test_rigid_data_reproduced_exactly(self):
        # rigid motions are exact trilinear fields: imposing one on patch
        # and walls must return it, and the annulus fit must recover c
        m = layer_mesh(T=4.5, n_z=3, inner_step=0.5)
        c = np.array([0.3, -0.2, 0.15, 0.4])
        nodes = m.grid.nodes()
        rig = np.einsum("qia,a->qi", rigid_sharp(nodes), c)
        data = lambda p: np.einsum("qia,a->qi", rigid_sharp(p), c)
        vals, rep = solve_layer_problem(m, A1, theta_data=data,
                                        outer_data=data)
        assert np.abs(vals - rig).max() < 1e-7
        fit = fit_rigid(m, vals)
        assert np.abs(fit.c - c).max() < 1e-8
        assert fit.residual < 1e-8 and fit.spread.max() < 1e-8

    def test_manufactured_solution_second_order(self, ops):
        # compact bump away from patch and walls; interior and face data
        # derived exactly from the displacement polynomials
        ms = manufactured_solution(A1)
        errs = []
        for step, nz in ((0.25, 3), (0.125, 6)):
            # uniform core out to 3.0 so the bump sits on unstretched cells
            m = layer_mesh(T=4.5, n_z=nz, inner_step=step, core_radius=3.0)
            vals, rep = solve_layer_problem(
                m, A1, body_force=ms.body_force, traction_top=ms.traction_top,
                traction_bottom=ms.traction_bottom)
            exact = ms.displacement(m.grid.nodes())
            errs.append(np.abs(vals - exact).max())
        assert errs[0] < 4.5e-2 and errs[1] < 1.3e-2
        assert errs[0] / errs[1] > 3.0              # measured 3.47

    def test_weighted_norm_controlled_by_energy(self):
        # the decaying-weight norm stays below the energy with a constant
        # that is stable when the box is doubled
        ms = manufactured_solution(A1)
        ratios = []
        for T in (4.5, 9.0):
            m = layer_mesh(T=T, n_z=3, inner_step=0.25, core_radius=3.0)
            vals, _ = solve_layer_problem(
                m, A1, body_force=ms.body_force, traction_top=ms.traction_top,
                traction_bottom=ms.traction_bottom)
            ratios.append(v01_norm(m, vals) ** 2 / strain_energy(m, A1, vals))
        assert ratios[0] < 1.0 and ratios[1] < 1.0
        assert abs(ratios[1] - ratios[0]) < 0.02 * ratios[0]


class TestFarFieldExpansion:
    def test_membrane_column_leading_behavior(self, expansion, phi):
        # far from the patch the first column reduces to the plane
        # membrane fundamental (thickness corrections decay)
        pts = np.array([[50.0, 3.0, 0.25], [-40.0, 8.0, -0.4],
                        [30.0, -20.0, 0.1]])
        got = expansion.eval_column(0, pts)
        want = np.column_stack([phi.membrane.field(0, 0).eval(pts[:, :2]),
                                phi.membrane.field(1, 0).eval(pts[:, :2])])
        assert np.abs(got[:, :2] - want).max() < 1e-5
        # the vertical component is the decaying thickness correction
        assert 0 < np.abs(got[:, 2]).max() < 5e-4

    def test_vertical_parity(self, expansion):
        # isotropic material: membrane columns have even horizontal and
        # odd vertical parts in zeta, bending columns the opposite
        base = np.array([[7.0, 3.0], [-4.0, 9.0]])
        up = np.column_stack([base, np.full(2, 0.37)])
        dn = np.column_stack([base, np.full(2, -0.37)])
        for col, sign in ((0, 1.0), (1, 1.0), (2, -1.0), (3, -1.0)):
            vu = expansion.eval_column(col, up)
            vd = expansion.eval_column(col, dn)
            assert np.abs(vu[:, :2] - sign * vd[:, :2]).max() < 1e-12
            assert np.abs(vu[:, 2] + sign * vd[:, 2]).max() < 1e-12

    def test_eval_stacks_columns(self, expansion):
        pts = np.array([[5.0, 2.0, 0.1], [-3.0, 4.0, -0.3]])
        full = expansion.eval(pts)
        assert full.shape == (2, 3, 4)
        for col in range(4):
            assert np.array_equal(full[:, :, col],
                                  expansion.eval_column(col, pts))

    def test_requires_normalized_membrane(self, phi, ops):
        raw = dataclasses.replace(phi.membrane, normalized=False)
        with pytest.raises(ContractError):
            FarFieldExpansion(PhiSharp(raw, phi.bending), ops)


class TestFarFieldDerivatives:
    def test_first_derivative_matches_finite_difference(self, expansion):
        pts = np.array([[4.0, 2.5, 0.2], [-3.0, 5.0, -0.35]])
        h = 1e-5
        for col in range(4):
            for axis in (1, 2):
                step = np.zeros(3)
                step[axis - 1] = h
                fd = (expansion.eval_column(col, pts + step)
                      - expansion.eval_column(col, pts - step)) / (2 * h)
                got = expansion.eval_derivative(col, (axis,), pts)
                assert np.abs(got - fd).max() < 1e-6

    def test_second_derivative_matches_finite_difference(self, expansion):
        pts = np.array([[4.0, 2.5, 0.2], [-3.0, 5.0, -0.35]])
        h = 1e-4
        dx = np.array([h, 0.0, 0.0])
        dy = np.array([0.0, h, 0.0])
        for col in (0, 3):
            fd = (expansion.eval_column(col, pts + dx + dy)
                  - expansion.eval_column(col, pts + dx - dy)
                  - expansion.eval_column(col, pts - dx + dy)
                  + expansion.eval_column(col, pts - dx - dy)) / (4 * h * h)
            got = expansion.eval_derivative(col, (1, 2), pts)
            assert np.abs(got - fd).max() < 1e-5

    def test_shared_kernel_identity(self, expansion):
        # columns 2 and 3 come from one scalar kernel via -d2 and +d1, so
        # d1 of column 2 and -d2 of column 3 are the same field
        rng = np.random.default_rng(11)
        pts = rng.uniform([-6, -6, -0.5], [6, 6, 0.5], size=(30, 3))
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 2.0]
        a = expansion.eval_derivative(2, (1,), pts)
        b = expansion.eval_derivative(3, (2,), pts)
        assert np.abs(a + b).max() < 1e-12

    def test_basis_shapes(self, expansion):
        pts = np.array([[5.0, 1.0, 0.1], [2.0, -4.0, -0.2], [6.0, 6.0, 0.0]])
        dip = expansion.dipole_basis(pts)
        enr = expansion.enrichment_basis(pts)
        assert dip.shape == (3, 3, 7)
        assert enr.shape == (3, 3, 17)
        assert np.array_equal(enr[:, :, :7], dip)


@pytest.fixture(scope="module")
def coarse_run(ops, phi):
    """One full extraction on a deliberately coarse but valid box."""
    mesh = layer_mesh(n_z=3, inner_step=0.5, growth_cap=1.5)
    cap, pot = extract_capacity(mesh, A1, phi, ops)
    return cap, pot, mesh


class TestCapacityExtraction:
    def test_fixed_point_converges_fast(self, coarse_run):
        cap, pot, mesh = coarse_run
        assert cap.converged.all()
        assert (cap.iterations <= 4).all()
        assert not cap.warning

    def test_contraction_factor(self, coarse_run):
        cap, pot, mesh = coarse_run
        for hist in pot.histories:
            deltas = [h[1] for h in hist[1:]]
            assert deltas[0] / max(deltas[1], 1e-300) >= 2.0

    def test_verification_sweep_confirms_fixed_point(self, coarse_run):
        cap, pot, mesh = coarse_run
        for hist in pot.histories:
            assert hist[-1][1] <= 1e-9

    def test_columns_vanish_on_patch(self, coarse_run):
        cap, pot, mesh = coarse_run
        assert np.abs(pot.columns[:, mesh.theta_nodes]).max() == 0.0

    def test_reflection_structure(self, coarse_run):
        # centered disk, isotropic material: reflections force the
        # translation/tilt cross blocks to vanish and pair the rest
        cap, _, _ = coarse_run
        C = cap.C
        off = max(abs(C[0, 1]), abs(C[0, 2]), abs(C[1, 3]), abs(C[2, 3]),
                  abs(C[1, 0]), abs(C[2, 0]), abs(C[3, 1]), abs(C[3, 2]))
        assert off < 1e-9
        assert abs(C[0, 0] - C[1, 1]) < 1e-9
        assert abs(C[2, 2] - C[3, 3]) < 1e-9
        assert abs(C[0, 3] + C[1, 2]) < 1e-9
        assert abs(C[3, 0] + C[2, 1]) < 1e-9

    def test_diagonal_sign(self, coarse_run):
        cap, _, _ = coarse_run
        assert (np.diag(cap.C) < 0).all()

    def test_dipole_coefficients_vanish_by_parity(self, coarse_run):
        # first-derivative fields flip a reflection the column keeps, so
        # the symmetric configuration cannot excite them
        cap, pot, _ = coarse_run
        assert pot.x.shape == (21, 4)
        assert np.abs(pot.x[4:11]).max() < 1e-8

    def test_result_metadata(self, coarse_run):
        cap, pot, mesh = coarse_run
        assert cap.mode == "affine" and cap.closure == "enriched"
        assert cap.T == mesh.T
        assert cap.mesh_signature == mesh.signature
        assert np.array_equal(pot.c, cap.C)
        assert cap.annulus == (0.55, 0.8)

    def test_error_bar_structure(self, coarse_run):
        cap, _, _ = coarse_run
        assert (cap.fit_residuals > 0).all()
        assert cap.fit_residuals[0] == pytest.approx(cap.fit_residuals[1],
                                                     rel=1e-6)
        assert (cap.band_spread >= 0).all()
        assert (cap.correction_bars >= 0).all()
        # combined bars contain the correction part
        assert (cap.error_bars >= cap.correction_bars - 1e-15).all()
        assert cap.error_bars.max() > 0

    def test_defect_moderate_on_coarse_mesh(self, coarse_run):
        cap, _, _ = coarse_run
        assert 0 < cap.symmetry_defect < 0.25


class TestCapacityInvariances:
    def test_cutoff_scale_invariance(self, coarse_run, ops, phi):
        cap, _, mesh = coarse_run
        cap2, _ = extract_capacity(mesh, A1, phi, ops, chi_scale=3.0)
        assert np.array_equal(cap.C, cap2.C)

    def test_annulus_quadrature_doubling(self, coarse_run, ops, phi):
        cap, _, mesh = coarse_run
        cap2, _ = extract_capacity(mesh, A1, phi, ops, n_angular=96,
                                   n_radial=12)
        dC = np.abs(cap.C - cap2.C)
        assert (dC <= cap.error_bars + cap2.error_bars).all()

    def test_annulus_shift(self, coarse_run, ops, phi):
        cap, _, mesh = coarse_run
        cap2, _ = extract_capacity(mesh, A1, phi, ops, annulus=(0.5, 0.75))
        dC = np.abs(cap.C - cap2.C)
        assert (dC <= cap.error_bars + cap2.error_bars).all()


class TestCapacityModes:
    def test_dipole_closure_matches_plain_for_disk(self, coarse_run, ops,
                                                   phi):
        _, _, mesh = coarse_run
        cd, pd = extract_capacity(mesh, A1, phi, ops, closure="dipole")
        cp, _ = extract_capacity(mesh, A1, phi, ops, closure="plain")
        assert pd.x.shape == (11, 4)
        assert np.abs(cd.C - cp.C).max() < 1e-10

    def test_picard_on_plain_closure_is_slow(self, coarse_run, ops, phi):
        _, _, mesh = coarse_run
        cap, pot = extract_capacity(mesh, A1, phi, ops, mode="picard",
                                    closure="plain", max_iterations=25)
        assert not cap.converged.any()
        assert (cap.iterations == 25).all()
        assert cap.warning
        for hist in pot.histories:
            deltas = [h[1] for h in hist[1:]]
            assert deltas[-1] < deltas[1]
            assert 0 < deltas[-1] / deltas[-2] < 1.0

    def test_picard_on_enriched_closure_diverges(self, coarse_run, ops, phi):
        _, _, mesh = coarse_run
        with pytest.raises(ExtractionError) as exc:
            extract_capacity(mesh, A1, phi, ops, mode="picard",
                             max_iterations=30)
        assert len(exc.value.histories) >= 2

    def test_unknown_mode_and_closure(self, coarse_run, ops, phi):
        _, _, mesh = coarse_run
        with pytest.raises(ValueError):
            extract_capacity(mesh, A1, phi, ops, mode="newton")
        with pytest.raises(ValueError):
            extract_capacity(mesh, A1, phi, ops, closure="octopole")


class TestCapacityContracts:
    def test_requires_normalized_fundamentals(self, coarse_run, ops, phi):
        _, _, mesh = coarse_run
        raw = PhiSharp(dataclasses.replace(phi.membrane, normalized=False),
                       phi.bending)
        with pytest.raises(ContractError):
            extract_capacity(mesh, A1, raw, ops)

    def test_box_too_small_for_matching(self, ops, phi):
        mesh = layer_mesh(T=6.0, n_z=3, inner_step=0.5)
        with pytest.raises(ContractError):
            extract_capacity(mesh, A1, phi, ops)

    def test_annulus_overlapping_near_field(self, coarse_run, ops, phi):
        _, _, mesh = coarse_run
        with pytest.raises(ContractError):
            extract_capacity(mesh, A1, phi, ops, annulus=(0.2, 0.4))

    def test_material_mismatch(self, coarse_run, ops, phi):
        _, _, mesh = coarse_run
        doubled = 2.0 * np.array([[float(x) for x in row] for row in A1])
        with pytest.raises(ContractError):
            extract_capacity(mesh, doubled, phi, ops)

    def test_fundamental_mismatch(self, coarse_run, ops):
        _, _, mesh = coarse_run
        s = np.diag([1.15, 0.9, 1.05, 0.95, 1.1, 0.85])
        A_other = s @ np.array([[float(x) for x in row] for row in A1]) @ s
        ops_other = build_dimension_reduction(A_other)
        A0 = np.array([[float(x) for x in r] for r in ops_other.reduced])
        phi_other = construct_fundamental(A0, n_angular=64)
        with pytest.raises(ContractError):
            extract_capacity(mesh, A1, phi_other, ops)

    def test_residual_threshold_warning(self, coarse_run, ops, phi):
        _, _, mesh = coarse_run
        cap, _ = extract_capacity(mesh, A1, phi, ops, residual_warn=1e-9)
        assert cap.warning


class TestCapacityReports:
    def test_decay_report(self, coarse_run):
        cap, pot, mesh = coarse_run
        rep = symmetry_and_decay_report(cap, pot)
        assert rep.symmetry_defect == pytest.approx(cap.symmetry_defect)
        assert np.abs(rep.C_symmetrized - rep.C_symmetrized.T).max() < 1e-15
        assert rep.growth_exponents[0] < 1.0
        assert rep.growth_exponents[1] < 1.0
        assert rep.growth_exponents[2] < 2.0
        assert (np.diff(rep.radii) > 0).all()
        assert rep.row_norms.shape == (3, len(rep.radii))
        a0, a1 = cap.annulus
        assert (rep.band_radii >= a0 * mesh.T).all()
        assert (rep.band_radii <= a1 * mesh.T).all()
        assert (rep.band_residuals > 0).all()

    def test_capacity_json_roundtrip_and_determinism(self, coarse_run):
        cap, _, _ = coarse_run
        s = capacity_json(cap)
        assert s == capacity_json(cap)
        assert s.endswith("\n")
        rec = json.loads(s)
        assert set(rec) == {"T", "mesh", "material", "theta_spec", "C_sharp",
                            "symmetry_defect", "fit_residuals", "iterations",
                            "error_bars", "band_spread", "correction_bars",
                            "annulus", "mode", "closure", "warning"}
        assert rec["C_sharp"] == [float(x) for x in cap.C.ravel()]
        assert rec["closure"] == "enriched" and rec["mode"] == "affine"
        assert len(rec["material"]) == 36

    def test_decay_csv_format(self, coarse_run):
        cap, pot, _ = coarse_run
        rep = symmetry_and_decay_report(cap, pot)
        text = decay_csv(rep)
        lines = text.strip().split("\n")
        assert lines[0] == "rho,row1,row2,row3"
        assert len(lines) == 1 + len(rep.radii)
        first = [float(x) for x in lines[1].split(",")]
        assert first[0] == pytest.approx(rep.radii[0])
