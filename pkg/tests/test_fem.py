"""Structured FEM: assembly oracles, CG, saddle solves, eigenpairs."""
import numpy as np
import pytest
import scipy.sparse as sp

from platecap.elastic import isotropic_stiffness, rigid_motion_matrix
from platecap.fem import (ConstraintSet, EliminationSolver, MeshError,
                          SolverError, SparseSystem, StructuredGrid,
                          assemble_elastic, assemble_load,
                          assemble_pointwise_form, dump_matrix_market,
                          smallest_eigenpair, solve_cg, solve_constrained)

I6 = np.eye(6)


def laplacian_1d(n):
    """Dirichlet Laplacian on (0,1), n interior nodes, as a SparseSystem."""
    d = 1.0 / (n + 1)
    K = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)) / d ** 2
    return SparseSystem(matrix=K.tocsr(), rhs=np.zeros(n),
                        constraints=ConstraintSet(ncomp=1)), d


class TestGrid:
    def test_validation(self):
        with pytest.raises(MeshError):
            StructuredGrid([np.array([0.0, 1.0])])
        with pytest.raises(MeshError):
            StructuredGrid([np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0])])
        with pytest.raises(MeshError):
            StructuredGrid([np.array([0.0]), np.array([0.0, 1.0])])

    def test_counts_and_geometry(self):
        g = StructuredGrid.uniform((0, 0, 0), (2, 1, 1), (2, 1, 1))
        assert g.shape == (3, 2, 2) and g.n_nodes == 12 and g.n_elements == 2
        assert np.allclose(g.element_sizes(), [[1.0, 1.0, 1.0]] * 2)
        assert np.allclose(g.element_centroids(),
                           [[0.5, 0.5, 0.5], [1.5, 0.5, 0.5]])

    def test_face_nodes(self):
        g = StructuredGrid.uniform((0, 0), (1, 1), (2, 2))
        left = g.face_nodes(0, 0)
        pts = g.nodes()[left]
        assert np.all(pts[:, 0] == 0.0) and len(left) == 3

    def test_graded_axes(self):
        g = StructuredGrid([np.array([0.0, 0.1, 0.3, 1.0]),
                            np.array([0.0, 0.5, 1.0])])
        assert g.n_elements == 6
        sizes = g.element_sizes()
        assert np.allclose(np.unique(sizes[:, 0]), [0.1, 0.2, 0.7])


class TestAssembly:
    def test_single_cube_kernel_dimension(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (1, 1, 1))
        K = assemble_elastic(g, I6).matrix.toarray()
        assert K.shape == (24, 24)
        assert np.allclose(K, K.T, atol=1e-14)
        w = np.linalg.eigvalsh(K)
        assert np.sum(np.abs(w) < 1e-10) == 6

    def test_rigid_motions_in_kernel_exactly(self):
        rng = np.random.default_rng(1)
        B = rng.normal(size=(6, 6))
        A = B @ B.T + 6 * I6
        g = StructuredGrid([np.array([0.0, 0.4, 1.0]),
                            np.array([-1.0, 0.0, 0.5]),
                            np.array([0.0, 0.25])])
        K = assemble_elastic(g, A).matrix
        pts = g.nodes()
        for col in range(6):
            c = np.zeros(6)
            c[col] = 1.0
            u = np.stack([rigid_motion_matrix(p) @ c for p in pts]).ravel()
            assert np.max(np.abs(K @ u)) < 1e-12 * max(1.0, np.abs(u).max())

    def test_clamped_face_positive_definite(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (2, 2, 2))
        cs = ConstraintSet(ncomp=3)
        cs.fix_nodes(g.face_nodes(2, 0))
        sysm = assemble_elastic(g, isotropic_stiffness(1.0, 1.0), cs)
        fixed, _ = cs.dirichlet_dofs()
        free = np.setdiff1d(np.arange(sysm.n), fixed)
        Kff = sysm.matrix.toarray()[np.ix_(free, free)]
        assert np.linalg.eigvalsh(Kff).min() > 1e-8

    def test_interpolation_energy_ratio_four(self):
        # u1 = x1^2: interpolant drops exactly h^2/3 of the energy 4/3
        energies = {}
        for n in (2, 4, 8):
            g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (n, n, n))
            K = assemble_elastic(g, I6).matrix
            u = np.zeros((g.n_nodes, 3))
            u[:, 0] = g.nodes()[:, 0] ** 2
            energies[n] = u.ravel() @ (K @ u.ravel())
        e2 = 4.0 / 3.0 - energies[2]
        e4 = 4.0 / 3.0 - energies[4]
        e8 = 4.0 / 3.0 - energies[8]
        assert abs(e2 / e4 - 4.0) < 1e-9 and abs(e4 / e8 - 4.0) < 1e-9
        assert abs(e2 - 0.25 / 3.0) < 1e-12

    def test_2d_membrane_rigid_and_stretch(self):
        A0 = np.array([[8 / 3, 2 / 3, 0], [2 / 3, 8 / 3, 0], [0, 0, 2.0]])
        g = StructuredGrid.uniform((0, 0), (1, 1), (3, 3))
        K = assemble_elastic(g, A0).matrix
        pts = g.nodes()
        rot = np.stack([-pts[:, 1], pts[:, 0]], axis=1).ravel()
        assert np.max(np.abs(K @ rot)) < 1e-12
        stretch = np.stack([pts[:, 0], np.zeros(len(pts))], axis=1).ravel()
        assert abs(stretch @ (K @ stretch) - 8.0 / 3.0) < 1e-12

    def test_stiffness_shape_checked(self):
        g = StructuredGrid.uniform((0, 0), (1, 1), (1, 1))
        with pytest.raises(ValueError):
            assemble_elastic(g, I6)


class TestPointwiseForm:
    def test_value_block_is_mass(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 2, 1), (2, 2, 2))
        m = 12
        W = np.zeros((g.n_elements, m, m))
        W[:, :3, :3] = np.eye(3)
        M = assemble_pointwise_form(g, W)
        u = np.tile([1.0, -2.0, 0.5], g.n_nodes)
        assert abs(u @ (M @ u) - (1 + 4 + 0.25) * 2.0) < 1e-12

    def test_gradient_block_energy(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (2, 2, 2))
        m = 12
        W = np.zeros((g.n_elements, m, m))
        W[:, 3:, 3:] = np.eye(9)
        M = assemble_pointwise_form(g, W)
        u = np.zeros((g.n_nodes, 3))
        u[:, 0] = g.nodes()[:, 1]          # d2 u1 = 1 everywhere
        v = u.ravel()
        assert abs(v @ (M @ v) - 1.0) < 1e-12

    def test_shape_validation(self):
        g = StructuredGrid.uniform((0, 0), (1, 1), (1, 1))
        with pytest.raises(ValueError):
            assemble_pointwise_form(g, np.zeros((2, 6, 6)))


class TestLoad:
    def test_constant_force_total(self):
        g = StructuredGrid.uniform((0, 0), (2, 1), (3, 2))
        F = assemble_load(g, lambda x: np.tile([1.0, -3.0], (len(x), 1)))
        F = F.reshape(-1, 2)
        assert abs(F[:, 0].sum() - 2.0) < 1e-12     # area * f1
        assert abs(F[:, 1].sum() + 6.0) < 1e-12


class TestCG:
    def test_identity_one_iteration(self):
        n = 17
        sysm = SparseSystem(sp.identity(n, format="csr"), np.arange(1.0, n + 1),
                            ConstraintSet(ncomp=1))
        x, rep = solve_cg(sysm, tol=1e-12)
        assert rep.iterations == 1 and np.allclose(x, sysm.rhs)

    def test_laplacian_eigenvector_rhs(self):
        sysm, d = laplacian_1d(40)
        j = np.arange(1, 41)
        v = np.sin(np.pi * d * j)
        lam1 = (2.0 - 2.0 * np.cos(np.pi * d)) / d ** 2
        sysm.rhs[:] = v
        x, rep = solve_cg(sysm, tol=1e-12)
        assert np.allclose(x, v / lam1, atol=1e-10)

    def test_random_spd_against_dense(self):
        rng = np.random.default_rng(3)
        B = rng.normal(size=(50, 50))
        A = B @ B.T + 50 * np.eye(50)
        b = rng.normal(size=50)
        sysm = SparseSystem(sp.csr_matrix(A), b, ConstraintSet(ncomp=1))
        x, rep = solve_cg(sysm, tol=1e-12)
        assert np.linalg.norm(x - np.linalg.solve(A, b)) <= 1e-8

    def test_dirichlet_elimination_path(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (2, 2, 2))
        cs = ConstraintSet(ncomp=3)
        cs.fix_nodes(g.face_nodes(0, 0), value=0.0)
        for node in g.face_nodes(0, 1):
            cs.fix(node, 0, 0.1)
            cs.fix(node, 1, 0.0)
            cs.fix(node, 2, 0.0)
        sysm = assemble_elastic(g, isotropic_stiffness(1.0, 1.0), cs)
        x, rep = solve_cg(sysm, tol=1e-10)
        fixed, vals = cs.dirichlet_dofs()
        assert np.allclose(x[fixed], vals)
        free = np.setdiff1d(np.arange(sysm.n), fixed)
        r = (sysm.matrix @ x - sysm.rhs)[free]
        assert np.linalg.norm(r) <= 1e-8 * max(np.abs(x).max(), 1.0)

    def test_nonconvergence_raises(self):
        # ill-conditioned enough that the 20*sqrt(n) cap binds
        sysm, _ = laplacian_1d(2500)
        sysm.rhs[:] = 1.0
        with pytest.raises(SolverError):
            solve_cg(sysm, tol=1e-12)

    def test_lagrange_rejected(self):
        sysm, _ = laplacian_1d(5)
        sysm.constraints.add_lagrange([0], [1.0], 0.0)
        with pytest.raises(ValueError):
            solve_cg(sysm)


class TestEigen:
    def test_k_equals_m(self):
        sysm, _ = laplacian_1d(30)
        lam, vec = smallest_eigenpair(sysm, sysm.matrix)
        assert abs(lam - 1.0) < 1e-9

    def test_laplacian_spectrum_formula(self):
        n = 50
        sysm, d = laplacian_1d(n)
        M = sp.identity(n, format="csr")
        lam, vec = smallest_eigenpair(sysm, M, tol=1e-10)
        exact = (2.0 - 2.0 * np.cos(np.pi * d)) / d ** 2
        assert abs(lam - exact) < 1e-6 * exact
        j = np.arange(1, n + 1)
        v1 = np.sin(np.pi * d * j)
        assert abs(abs(vec @ v1) / np.linalg.norm(vec) / np.linalg.norm(v1)
                   - 1.0) < 1e-6

    def test_rayleigh_quotient_bound(self):
        sysm, _ = laplacian_1d(25)
        M = sp.identity(25, format="csr")
        lam, _ = smallest_eigenpair(sysm, M)
        rng = np.random.default_rng(5)
        for _ in range(10):
            u = rng.standard_normal(25)
            assert (u @ (sysm.matrix @ u)) / (u @ u) >= lam - 1e-9

    def test_monotonicity_under_constraints(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (2, 2, 2))
        A = isotropic_stiffness(1.0, 1.0)
        lams = []
        for extra in (0, 1):
            cs = ConstraintSet(ncomp=3)
            cs.fix_nodes(g.face_nodes(2, 0))
            if extra:
                cs.fix_nodes(g.face_nodes(2, 1))
            sysm = assemble_elastic(g, A, cs)
            M = sp.identity(sysm.n, format="csr")
            lam, _ = smallest_eigenpair(sysm, M, tol=1e-8)
            lams.append(lam)
        assert lams[1] >= lams[0] - 1e-10


class TestConstrained:
    def _clamped_system(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (2, 2, 2))
        cs = ConstraintSet(ncomp=3)
        cs.fix_nodes(g.face_nodes(2, 0))
        sysm = assemble_elastic(g, isotropic_stiffness(1.0, 1.0), cs)
        sysm.rhs[:] = 0.0
        top = g.face_nodes(2, 1)
        sysm.rhs[top * 3 + 2] = 0.01
        return g, sysm

    def test_duplicate_of_dirichlet_gets_zero_multiplier(self):
        g, sysm = self._clamped_system()
        node = int(g.face_nodes(2, 0)[0])
        sysm.constraints.add_lagrange([node * 3 + 2], [1.0], 0.0)
        x, lam, rep = solve_constrained(sysm)
        assert lam[0] == 0.0 and rep.converged

    def test_inactive_point_constraint(self):
        g, sysm = self._clamped_system()
        x0, _, _ = solve_constrained(
            SparseSystem(sysm.matrix, sysm.rhs, ConstraintSet(
                ncomp=3, dirichlet=dict(sysm.constraints.dirichlet))))
        node = int(g.face_nodes(2, 1)[0])
        dof = node * 3 + 2
        sysm.constraints.add_lagrange([dof], [1.0], float(x0[dof]))
        x, lam, rep = solve_constrained(sysm)
        assert abs(lam[0]) < 1e-9 * max(1.0, np.abs(sysm.rhs).max())
        assert np.allclose(x, x0, atol=1e-10)

    def test_active_constraint_enforced_exactly(self):
        g, sysm = self._clamped_system()
        node = int(g.face_nodes(2, 1)[-1])
        dof = node * 3 + 2
        sysm.constraints.add_lagrange([dof], [1.0], 0.0)
        x, lam, rep = solve_constrained(sysm)
        assert abs(x[dof]) <= 1e-12
        assert lam[0] != 0.0

    def test_inconsistent_duplicate_raises(self):
        g, sysm = self._clamped_system()
        node = int(g.face_nodes(2, 0)[0])
        sysm.constraints.add_lagrange([node * 3 + 2], [1.0], 1.0)
        with pytest.raises(SolverError):
            solve_constrained(sysm)

    def test_dependent_constraints_raise(self):
        g, sysm = self._clamped_system()
        node = int(g.face_nodes(2, 1)[0])
        dof = node * 3 + 2
        sysm.constraints.add_lagrange([dof], [1.0], 0.0)
        sysm.constraints.add_lagrange([dof], [2.0], 0.0)
        with pytest.raises(SolverError):
            solve_constrained(sysm)


class TestEliminationSolver:
    def test_reused_factor_matches_fresh_solves(self):
        g = StructuredGrid.uniform((0, 0, 0), (1, 1, 1), (2, 2, 2))
        cs = ConstraintSet(ncomp=3)
        bottom = g.face_nodes(2, 0)
        cs.fix_nodes(bottom)
        sysm = assemble_elastic(g, isotropic_stiffness(2.0, 1.0), cs)
        solver = EliminationSolver(sysm)
        rng = np.random.default_rng(7)
        for _ in range(3):
            vals = rng.normal(size=len(solver.fixed)) * 0.01
            x = solver.solve(fixed_values=vals)
            assert np.allclose(x[solver.fixed], vals)
            r = (sysm.matrix @ x)[solver.free]
            assert np.linalg.norm(r) < 1e-10


class TestDump:
    def test_matrix_market_round_trip(self, tmp_path):
        from scipy.io import mmread

        K = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
        path = str(tmp_path / "k.mtx")
        dump_matrix_market(path, K)
        K2 = mmread(path).toarray()
        assert np.allclose(K2, K.toarray())
