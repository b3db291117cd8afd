"""Structured-grid finite elements: Q1 quads and hexes, CG, eigenpairs.

Grids are tensor products of strictly increasing coordinate axes, so element
Jacobians are diagonal and positive by construction.  Elements sharing the
same size triple share one element matrix; assembly groups by size and emits
COO blocks, which keeps graded boxes cheap.  Degrees of freedom are
node-major: dof = node * ncomp + component.

Assembly is deterministic: elements are processed in lexicographic order and
duplicate COO entries are summed by scipy in a fixed order, so repeated runs
produce bit-identical matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elastic import strain_matrix


class MeshError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

class StructuredGrid:
    """Tensor-product grid in 2 or 3 dimensions."""

    def __init__(self, axes: Sequence[np.ndarray]):
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        if len(axes) not in (2, 3):
            raise MeshError("grid needs 2 or 3 axes")
        for a in axes:
            if a.ndim != 1 or len(a) < 2:
                raise MeshError("each axis needs >= 2 nodes")
            if not np.all(np.diff(a) > 0):
                raise MeshError("axis coordinates must be strictly increasing")
        self.axes = axes

    @staticmethod
    def uniform(lo: Sequence[float], hi: Sequence[float],
                divisions: Sequence[int]) -> "StructuredGrid":
        return StructuredGrid([np.linspace(l, h, n + 1)
                               for l, h, n in zip(lo, hi, divisions)])

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod([len(a) - 1 for a in self.axes]))

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def element_node_ids(self) -> np.ndarray:
        """(n_elements, 2^ndim) node ids, corners in lexicographic offset order."""
        shape = self.shape
        ecounts = [n - 1 for n in shape]
        base = np.stack(np.meshgrid(*[np.arange(n) for n in ecounts],
                                    indexing="ij"), axis=-1).reshape(-1, self.ndim)
        offs = np.stack(np.meshgrid(*[[0, 1]] * self.ndim,
                                    indexing="ij"), axis=-1).reshape(-1, self.ndim)
        corners = base[:, None, :] + offs[None, :, :]
        return np.ravel_multi_index(
            tuple(corners[..., d] for d in range(self.ndim)), shape)

    def element_sizes(self) -> np.ndarray:
        diffs = [np.diff(a) for a in self.axes]
        mesh = np.meshgrid(*diffs, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def element_centroids(self) -> np.ndarray:
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def face_nodes(self, axis: int, side: int) -> np.ndarray:
        """Node ids on the face where coordinate `axis` is at its min (side=0)
        or max (side=1)."""
        shape = self.shape
        idx = [np.arange(n) for n in shape]
        idx[axis] = np.array([0 if side == 0 else shape[axis] - 1])
        mesh = np.meshgrid(*idx, indexing="ij")
        return np.ravel_multi_index(tuple(m.ravel() for m in mesh), shape)


# reference shape functions on [0,1]^d, corners in lexicographic offset order
def _ref_quadrature(ndim: int):
    g = (1.0 - 1.0 / np.sqrt(3.0)) / 2.0, (1.0 + 1.0 / np.sqrt(3.0)) / 2.0
    pts = np.stack(np.meshgrid(*[g] * ndim, indexing="ij"),
                   axis=-1).reshape(-1, ndim)
    wts = np.full(len(pts), 0.5 ** ndim)
    return pts, wts


def _shape_values(ndim: int, t: np.ndarray) -> np.ndarray:
    """(npts, 2^ndim) nodal values of the multilinear basis at points t."""
    offs = np.stack(np.meshgrid(*[[0, 1]] * ndim, indexing="ij"),
                    axis=-1).reshape(-1, ndim)
    vals = np.ones((len(t), len(offs)))
    for d in range(ndim):
        vals *= np.where(offs[None, :, d] == 1, t[:, None, d],
                         1.0 - t[:, None, d])
    return vals


def _shape_gradients(ndim: int, t: np.ndarray) -> np.ndarray:
    """(npts, 2^ndim, ndim) reference gradients of the multilinear basis."""
    offs = np.stack(np.meshgrid(*[[0, 1]] * ndim, indexing="ij"),
                    axis=-1).reshape(-1, ndim)
    grads = np.empty((len(t), len(offs), ndim))
    for d in range(ndim):
        g = np.ones((len(t), len(offs)))
        for e in range(ndim):
            if e == d:
                g *= np.where(offs[None, :, e] == 1, 1.0, -1.0)
            else:
                g *= np.where(offs[None, :, e] == 1, t[:, None, e],
                              1.0 - t[:, None, e])
        grads[:, :, d] = g
    return grads


# ---------------------------------------------------------------------------
# constraints and systems
# ---------------------------------------------------------------------------

@dataclass
class ConstraintSet:
    """Dirichlet values per (node, component) plus optional Lagrange rows."""

    ncomp: int = 3
    dirichlet: dict = field(default_factory=dict)   # (node, comp) -> value
    lagrange: list = field(default_factory=list)    # (dof_idx, coeffs, target)

    def fix(self, node: int, comp: int, value: float = 0.0):
        key = (int(node), int(comp))
        if key in self.dirichlet and self.dirichlet[key] != value:
            raise ValueError(f"conflicting Dirichlet value at {key}")
        self.dirichlet[key] = float(value)

    def fix_nodes(self, nodes, comps=None, value: float = 0.0):
        comps = range(self.ncomp) if comps is None else comps
        for n in np.asarray(nodes).ravel():
            for c in comps:
                self.fix(int(n), int(c), value)

    def add_lagrange(self, dof_idx, coeffs, target: float = 0.0):
        self.lagrange.append((np.asarray(dof_idx, dtype=int),
                              np.asarray(coeffs, dtype=float), float(target)))

    def dirichlet_dofs(self):
        if not self.dirichlet:
            return np.empty(0, dtype=int), np.empty(0)
        items = sorted(self.dirichlet.items(),
                       key=lambda kv: kv[0][0] * self.ncomp + kv[0][1])
        dofs = np.array([n * self.ncomp + c for (n, c), _ in items])
        vals = np.array([v for _, v in items])
        return dofs, vals


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constraints: ConstraintSet

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    unknowns: int


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _element_stiffness(A: np.ndarray, size: np.ndarray) -> np.ndarray:
    ndim = len(size)
    pts, wts = _ref_quadrature(ndim)
    grads = _shape_gradients(ndim, pts) / size[None, None, :]
    nsh = grads.shape[1]
    ncomp = 3 if ndim == 3 else 2
    nd = nsh * ncomp
    Ke = np.zeros((nd, nd))
    vol = float(np.prod(size))
    for p in range(len(pts)):
        if ndim == 3:
            B = np.zeros((6, nd))
            for a in range(nsh):
                B[:, 3 * a:3 * a + 3] = strain_matrix(grads[p, a])
        else:
            s = 2.0 ** -0.5
            B = np.zeros((3, nd))
            for a in range(nsh):
                g1, g2 = grads[p, a]
                B[0, 2 * a] = g1
                B[1, 2 * a + 1] = g2
                B[2, 2 * a] = s * g2
                B[2, 2 * a + 1] = s * g1
        Ke += wts[p] * vol * (B.T @ A @ B)
    return Ke


def _group_by_size(grid: StructuredGrid):
    sizes = grid.element_sizes()
    uniq, inverse = np.unique(sizes.round(decimals=14), axis=0,
                              return_inverse=True)
    return sizes, uniq, inverse


def _emit_coo(dofs: np.ndarray, Ke: np.ndarray):
    nd = Ke.shape[0]
    rows = np.repeat(dofs, nd, axis=1).ravel()
    cols = np.tile(dofs, (1, nd)).ravel()
    vals = np.tile(Ke.ravel(), dofs.shape[0])
    return rows, cols, vals


def _element_dofs(grid: StructuredGrid, ncomp: int) -> np.ndarray:
    ids = grid.element_node_ids()
    return (ids[:, :, None] * ncomp +
            np.arange(ncomp)[None, None, :]).reshape(ids.shape[0], -1)


def assemble_elastic(grid: StructuredGrid, A: np.ndarray,
                     constraints: ConstraintSet | None = None) -> SparseSystem:
    """Galerkin matrix of the strain form integral (A D(grad)u) . D(grad)v.

    3D grids take a 6x6 stiffness; 2D grids take the reduced 3x3 stiffness
    acting on the in-plane strain column (e11, e22, sqrt2 e12).
    """
    A = np.asarray(A, dtype=float)
    ncomp = 3 if grid.ndim == 3 else 2
    want = 6 if grid.ndim == 3 else 3
    if A.shape != (want, want):
        raise ValueError(f"stiffness must be {want}x{want} for {grid.ndim}D")
    if constraints is None:
        constraints = ConstraintSet(ncomp=ncomp)
    if constraints.ncomp != ncomp:
        raise ValueError("constraint block size does not match the grid")
    dofs = _element_dofs(grid, ncomp)
    _, uniq, inverse = _group_by_size(grid)
    n = grid.n_nodes * ncomp
    rows_all, cols_all, vals_all = [], [], []
    for u in range(len(uniq)):
        Ke = _element_stiffness(A, uniq[u])
        sel = np.flatnonzero(inverse == u)
        r, c, v = _emit_coo(dofs[sel], Ke)
        rows_all.append(r)
        cols_all.append(c)
        vals_all.append(v)
    K = sp.coo_matrix((np.concatenate(vals_all),
                       (np.concatenate(rows_all), np.concatenate(cols_all))),
                      shape=(n, n)).tocsr()
    K.sum_duplicates()
    return SparseSystem(matrix=K, rhs=np.zeros(n), constraints=constraints)


def assemble_pointwise_form(grid: StructuredGrid, W: np.ndarray,
                            ncomp: int | None = None) -> sp.csr_matrix:
    """Matrix of int  (u, grad u)^T W(x) (u, grad u)  with W frozen per element.

    W has shape (n_elements, m, m), m = ncomp * (1 + ndim); the row layout of
    the local vector is (u_1..u_c, d1 u_1..d1 u_c, ..., dd u_1..dd u_c).
    """
    ndim = grid.ndim
    if ncomp is None:
        ncomp = 3 if ndim == 3 else 2
    m = ncomp * (1 + ndim)
    W = np.asarray(W, dtype=float)
    if W.shape != (grid.n_elements, m, m):
        raise ValueError(f"W must have shape ({grid.n_elements}, {m}, {m})")
    pts, wts = _ref_quadrature(ndim)
    dofs = _element_dofs(grid, ncomp)
    _, uniq, inverse = _group_by_size(grid)
    n = grid.n_nodes * ncomp
    nsh = 2 ** ndim
    nd = nsh * ncomp
    rows_all, cols_all, vals_all = [], [], []
    for u in range(len(uniq)):
        size = uniq[u]
        vol = float(np.prod(size))
        vals = _shape_values(ndim, pts)
        grads = _shape_gradients(ndim, pts) / size[None, None, :]
        G = np.zeros((len(pts), m, nd))
        for a in range(nsh):
            for c in range(ncomp):
                G[:, c, a * ncomp + c] = vals[:, a]
                for d in range(ndim):
                    G[:, (1 + d) * ncomp + c, a * ncomp + c] = grads[:, a, d]
        sel = np.flatnonzero(inverse == u)
        Wg = W[sel]
        Me = np.einsum("p,pmi,emn,pnj->eij", wts * vol, G, Wg, G,
                       optimize=True)
        r = np.repeat(dofs[sel], nd, axis=1).ravel()
        c = np.tile(dofs[sel], (1, nd)).ravel()
        rows_all.append(r)
        cols_all.append(c)
        vals_all.append(Me.reshape(len(sel) * nd * nd))
    M = sp.coo_matrix((np.concatenate(vals_all),
                       (np.concatenate(rows_all), np.concatenate(cols_all))),
                      shape=(n, n)).tocsr()
    M.sum_duplicates()
    return M


def assemble_load(grid: StructuredGrid, f: Callable[[np.ndarray], np.ndarray],
                  ncomp: int | None = None) -> np.ndarray:
    """Consistent load vector for a body force f(points) -> (npts, ncomp)."""
    ndim = grid.ndim
    if ncomp is None:
        ncomp = 3 if ndim == 3 else 2
    pts, wts = _ref_quadrature(ndim)
    vals = _shape_values(ndim, pts)
    ids = grid.element_node_ids()
    sizes = grid.element_sizes()
    origins = grid.element_centroids() - 0.5 * sizes
    F = np.zeros(grid.n_nodes * ncomp)
    for p in range(len(pts)):
        x = origins + sizes * pts[p][None, :]
        fx = np.asarray(f(x), dtype=float).reshape(len(x), ncomp)
        w = wts[p] * np.prod(sizes, axis=1)
        contrib = (w[:, None] * fx)[:, None, :] * vals[p][None, :, None]
        dofs = (ids[:, :, None] * ncomp + np.arange(ncomp)[None, None, :])
        np.add.at(F, dofs.ravel(), contrib.ravel())
    return F


# ---------------------------------------------------------------------------
# constraint elimination and solvers
# ---------------------------------------------------------------------------

class EliminationSolver:
    """Splits fixed/free dofs once and factors the free block for reuse.

    Capacity extraction and eigen iterations repeatedly solve with the same
    matrix and varying boundary data; a single sparse LU shared across those
    solves replaces thousands of CG iterations.
    """

    def __init__(self, system: SparseSystem, direct: bool = True):
        K = system.matrix
        n = K.shape[0]
        fixed, fvals = system.constraints.dirichlet_dofs()
        mask = np.ones(n, dtype=bool)
        mask[fixed] = False
        self.free = np.flatnonzero(mask)
        self.fixed = fixed
        self.fixed_values = fvals
        self.n = n
        Kcsr = K.tocsr()
        self.Kff = Kcsr[self.free][:, self.free].tocsc()
        self.Kfc = Kcsr[self.free][:, fixed].tocsr() if len(fixed) else None
        self.base_rhs = system.rhs
        self._lu = None
        if direct and self.Kff.shape[0]:
            try:
                self._lu = spla.splu(self.Kff)
            except RuntimeError as exc:
                raise SolverError(f"factorization failed: {exc}")

    def solve(self, fixed_values: np.ndarray | None = None,
              body_rhs: np.ndarray | None = None) -> np.ndarray:
        fv = self.fixed_values if fixed_values is None else \
            np.asarray(fixed_values, dtype=float)
        rhs = self.base_rhs if body_rhs is None else body_rhs
        b = rhs[self.free].astype(float)
        if self.Kfc is not None:
            b = b - self.Kfc @ fv
        x = np.zeros(self.n)
        x[self.fixed] = fv
        if self._lu is not None:
            x[self.free] = self._lu.solve(b)
        elif len(self.free):
            raise SolverError("no factorization available")
        return x

    def solve_free(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


def _jacobi_cg(K: sp.csr_matrix, b: np.ndarray, tol: float, maxiter: int):
    n = len(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    d = K.diagonal().copy()
    if np.any(d <= 0):
        raise SolverError("non-positive diagonal: matrix not SPD")
    dinv = 1.0 / d
    x = np.zeros(n)
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    res = bnorm
    for it in range(1, maxiter + 1):
        q = K @ p
        pq = float(p @ q)
        if pq <= 0:
            raise SolverError("negative curvature: matrix not SPD")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        res = float(np.linalg.norm(r))
        if res <= tol * bnorm:
            return x, it, res / bnorm
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not converge in {maxiter} iterations "
        f"(relative residual {res / bnorm:.3e})")


def solve_cg(system: SparseSystem, tol: float = 1e-8):
    """Jacobi-preconditioned CG on the Dirichlet-reduced system."""
    if system.constraints.lagrange:
        raise ValueError("Lagrange rows present: use solve_constrained")
    K = system.matrix.tocsr()
    fixed, fvals = system.constraints.dirichlet_dofs()
    mask = np.ones(system.n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    Kff = K[free][:, free].tocsr()
    b = system.rhs[free].astype(float)
    if len(fixed):
        b = b - K[free][:, fixed] @ fvals
    cap = max(1, int(np.ceil(20.0 * np.sqrt(max(len(free), 1)))))
    xf, iters, rel = _jacobi_cg(Kff, b, tol, cap)
    x = np.zeros(system.n)
    x[fixed] = fvals
    x[free] = xf
    return x, SolveReport(iterations=iters, residual=rel, converged=True,
                          unknowns=len(free))


def solve_constrained(system: SparseSystem, tol: float = 1e-10):
    """Direct solve with Lagrange rows eliminated through a Schur complement.

    Returns (solution, multipliers, report).  Lagrange rows that become empty
    after Dirichlet elimination are dropped with multiplier 0 when their
    target is already met, and rejected as inconsistent otherwise.
    """
    solver = EliminationSolver(system, direct=True)
    free, fixed = solver.free, solver.fixed
    fvals = solver.fixed_values
    pos_of = np.full(system.n, -1, dtype=int)
    pos_of[free] = np.arange(len(free))

    rows, targets, keep = [], [], []
    for li, (idx, coef, tgt) in enumerate(system.constraints.lagrange):
        g = float(tgt)
        r = np.zeros(len(free))
        for dof, cf in zip(idx, coef):
            p = pos_of[dof]
            if p >= 0:
                r[p] += cf
            else:
                g -= cf * fvals[np.searchsorted(fixed, dof)]
        nrm = float(np.linalg.norm(r))
        if nrm == 0.0:
            if abs(g) > 1e-9 * max(1.0, abs(tgt)):
                raise SolverError(
                    f"inconsistent constraint {li}: empty row, target {g}")
            continue   # inactive duplicate of Dirichlet data: multiplier 0
        rows.append(r)
        targets.append(g)
        keep.append(li)

    b = system.rhs[free].astype(float)
    if solver.Kfc is not None:
        b = b - solver.Kfc @ fvals
    x0 = solver.solve_free(b) if len(free) else np.zeros(0)

    lam_full = np.zeros(len(system.constraints.lagrange))
    if rows:
        C = np.vstack(rows)
        Y = np.column_stack([solver.solve_free(C[i]) for i in range(len(rows))])
        S = C @ Y
        resid = C @ x0 - np.asarray(targets)
        try:
            lam = np.linalg.solve(S, resid)
        except np.linalg.LinAlgError:
            raise SolverError("singular saddle system: dependent constraints")
        if not np.all(np.isfinite(lam)):
            raise SolverError("singular saddle system: dependent constraints")
        xf = x0 - Y @ lam
        lam_full[np.asarray(keep)] = lam
        gap = float(np.max(np.abs(C @ xf - targets)))
    else:
        xf = x0
        gap = 0.0
    x = np.zeros(system.n)
    x[fixed] = fvals
    x[free] = xf
    report = SolveReport(iterations=1, residual=gap, converged=gap <= tol,
                         unknowns=len(free))
    if not report.converged:
        raise SolverError(f"constraint residual {gap:.3e} above {tol}")
    return x, lam_full, report


def smallest_eigenpair(K_system: SparseSystem, M_matrix, tol: float = 1e-6,
                       maxiter: int = 200):
    """Smallest generalized eigenpair of (K, M) on the constrained subspace.

    Inverse power iteration with sparse LU inner solves; a Rayleigh-quotient
    re-shift every 40 stalled iterations handles clustered spectra.  The
    residual criterion is ||K u - lambda M u|| / ||M u|| <= tol.
    """
    M = M_matrix.matrix if isinstance(M_matrix, SparseSystem) else M_matrix
    solver = EliminationSolver(K_system, direct=True)
    free = solver.free
    if not len(free):
        raise SolverError("no free dofs")
    Kff = solver.Kff.tocsr()
    Mff = M.tocsr()[free][:, free]
    rng = np.random.default_rng(0)
    x = rng.standard_normal(len(free))
    mx = float(x @ (Mff @ x))
    if mx <= 0 or not np.isfinite(mx):
        raise SolverError("mass matrix not positive on the subspace")
    x /= np.sqrt(mx)
    lu = solver._lu
    res = np.inf
    lam = float(x @ (Kff @ x))
    for it in range(1, maxiter + 1):
        y = lu.solve(Mff @ x)
        my = float(y @ (Mff @ y))
        if my <= 0 or not np.isfinite(my):
            raise SolverError("mass matrix not positive on the subspace")
        x = y / np.sqrt(my)
        lam = float(x @ (Kff @ x))
        r = Kff @ x - lam * (Mff @ x)
        den = float(np.linalg.norm(Mff @ x))
        res = float(np.linalg.norm(r)) / max(den, np.finfo(float).tiny)
        if res <= tol:
            if lam < -tol * max(1.0, abs(lam)):
                raise SolverError(
                    f"matrix indefinite under constraints: lambda={lam}")
            vec = np.zeros(K_system.n)
            vec[free] = x
            return lam, vec
        if it % 40 == 0:
            # Rayleigh re-shift, staying strictly below the target eigenvalue
            # so the shifted operator remains safely nonsingular
            rho = lam - max(abs(lam), 1.0) * 1e-6
            try:
                lu = spla.splu((Kff - rho * Mff).tocsc())
            except RuntimeError:
                pass   # keep the previous factorization
    raise SolverError(
        f"eigen iteration stalled: residual {res:.3e} after {maxiter} steps")


def dump_matrix_market(path: str, matrix: sp.spmatrix) -> None:
    from scipy.io import mmwrite

    mmwrite(path, matrix.tocoo())
