"""Two-dimensional limit plate model on a rectangle.

Membrane: anisotropic plane elasticity for (w1, w2), clamped on the whole
contour, discretized with bilinear quads (the strain-composition form
B^T A0 B evaluated at the 2x2 Gauss points of each cell).

Bending: fourth-order operator for w3 composed as D^T (A0/6) D where D
samples the second-difference curvature column

    (d1^2 w / sqrt2, d2^2 w / sqrt2, d1 d2 w)

at every node with trapezoid weights.  Clamping eliminates boundary values
and reflects ghost nodes through the boundary (mirror), which enforces the
zero normal slope: the reflected second difference 2*w_1/dx^2 at the contour
is the consistent curvature of a clamped plate, and the mirrored cross
difference vanishes there, as it must when w and its normal derivative are
held at zero.  A point support at an interior node is a single Lagrange
row; its multiplier is the reaction force.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .fem import (ConstraintSet, SolverError, SparseSystem, StructuredGrid,
                  assemble_elastic, assemble_pointwise_form, solve_constrained)
from .polyfield import Q2
from .reduction import bending_table_direct, membrane_table_direct

Q = Fraction


class DomainError(ValueError):
    pass


@dataclass
class PlateDomain:
    """Rectangle (0,a) x (0,b) with uniform spacing and an optional interior
    support node."""

    a: float
    b: float
    spacing: float
    point: tuple | None = None     # physical coordinates of the support

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.spacing <= 0:
            raise DomainError("need positive rectangle sides and spacing")
        self.nx = max(2, round(self.a / self.spacing))
        self.ny = max(2, round(self.b / self.spacing))
        self.dx = self.a / self.nx
        self.dy = self.b / self.ny
        if self.point is not None:
            i = round(self.point[0] / self.dx)
            j = round(self.point[1] / self.dy)
            if not (0 < i < self.nx and 0 < j < self.ny):
                raise DomainError("support point must be strictly interior")
            self.point_ij = (i, j)
        else:
            self.point_ij = None

    @property
    def grid(self) -> StructuredGrid:
        return StructuredGrid.uniform((0.0, 0.0), (self.a, self.b),
                                      (self.nx, self.ny))

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1)

    def node_id(self, i: int, j: int) -> int:
        return i * (self.ny + 1) + j

    @property
    def point_node(self):
        if self.point_ij is None:
            return None
        return self.node_id(*self.point_ij)

    def boundary_nodes(self) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1),
                             indexing="ij")
        mask = (ii == 0) | (ii == self.nx) | (jj == 0) | (jj == self.ny)
        return np.flatnonzero(mask.ravel())


@dataclass
class Load:
    """Nodal load samples; the note records where the values came from."""

    gprime: np.ndarray | None = None    # (n_nodes, 2)
    g3: np.ndarray | None = None        # (n_nodes,)
    note: str = ""


@dataclass
class KirchhoffSolution:
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    multiplier: float
    energy_membrane: float
    energy_bending: float


# ---------------------------------------------------------------------------
# limit operator coefficients
# ---------------------------------------------------------------------------

def _exact_a0(A0):
    if isinstance(A0, np.ndarray):
        return [[Q2.of(Q(x)) for x in row] for row in A0.tolist()]
    return [[Q2.of(x) for x in row] for row in A0]


def operator_coefficients(A0):
    """Exact symbol tables of the limit operators for a reduced stiffness.

    Returns (membrane, bending): membrane maps (a, b) -> 2x2 coefficient
    matrices of the second-order in-plane operator, bending maps (a, b) with
    a+b=4 to the scalar coefficients of the fourth-order operator.
    """
    A0e = _exact_a0(A0)
    return membrane_table_direct(A0e), bending_table_direct(A0e)


def membrane_table_float(table) -> dict:
    return {k: np.array([[float(Q2.of(x)) for x in row] for row in M])
            for k, M in table.items()}


def bending_table_float(table) -> dict:
    return {k: float(Q2.of(v)) for k, v in table.items()}


# ---------------------------------------------------------------------------
# membrane solve
# ---------------------------------------------------------------------------

def _mass_matrix(grid: StructuredGrid, ncomp: int) -> sp.csr_matrix:
    nd = grid.ndim
    m = ncomp * (1 + nd)
    W = np.zeros((grid.n_elements, m, m))
    W[:, :ncomp, :ncomp] = np.eye(ncomp)
    return assemble_pointwise_form(grid, W, ncomp=ncomp)


def solve_membrane(domain: PlateDomain, A0, gprime):
    """Clamped in-plane solve; returns (w1, w2, energy).

    gprime is either nodal samples (n_nodes, 2) or a callable on points.
    """
    grid = domain.grid
    A0f = np.array([[float(Q2.of(x)) for x in row]
                    for row in _exact_a0(A0)])
    cs = ConstraintSet(ncomp=2)
    cs.fix_nodes(domain.boundary_nodes())
    system = assemble_elastic(grid, A0f, cs)
    if callable(gprime):
        g = np.asarray(gprime(grid.nodes()), dtype=float)
    else:
        g = np.asarray(gprime, dtype=float)
    if g.shape != (grid.n_nodes, 2):
        raise ValueError("membrane load must be nodal (n_nodes, 2)")
    system.rhs = _mass_matrix(grid, 2) @ g.ravel()
    x, _, report = solve_constrained(system)
    r = system.matrix @ x - system.rhs
    fixed, _ = cs.dirichlet_dofs()
    free = np.setdiff1d(np.arange(system.n), fixed)
    rel = np.linalg.norm(r[free]) / max(np.linalg.norm(system.rhs[free]),
                                        np.finfo(float).tiny)
    if rel > 1e-10:
        raise SolverError(f"membrane residual {rel:.3e} above 1e-10")
    w = x.reshape(-1, 2)
    energy = 0.5 * float(x @ (system.matrix @ x)) - float(system.rhs @ x)
    return w[:, 0], w[:, 1], energy


# ---------------------------------------------------------------------------
# bending solve
# ---------------------------------------------------------------------------

def _curvature_matrix(domain: PlateDomain) -> sp.csr_matrix:
    """Rows 3*n..3*n+2: curvature column at node n, ghosts mirrored."""
    nx, ny = domain.nx, domain.ny
    dx, dy = domain.dx, domain.dy
    s = 2.0 ** -0.5
    rows, cols, vals = [], [], []

    def mirror(i, n):
        return -i if i < 0 else (2 * n - i if i > n else i)

    def add(r, i, j, v):
        rows.append(r)
        cols.append(domain.node_id(mirror(i, nx), mirror(j, ny)))
        vals.append(v)

    for i in range(nx + 1):
        for j in range(ny + 1):
            n = domain.node_id(i, j)
            r = 3 * n
            add(r, i - 1, j, s / dx ** 2)
            add(r, i, j, -2.0 * s / dx ** 2)
            add(r, i + 1, j, s / dx ** 2)
            r = 3 * n + 1
            add(r, i, j - 1, s / dy ** 2)
            add(r, i, j, -2.0 * s / dy ** 2)
            add(r, i, j + 1, s / dy ** 2)
            r = 3 * n + 2
            c = 1.0 / (4.0 * dx * dy)
            add(r, i + 1, j + 1, c)
            add(r, i + 1, j - 1, -c)
            add(r, i - 1, j + 1, -c)
            add(r, i - 1, j - 1, c)

    N = (nx + 1) * (ny + 1)
    D = sp.coo_matrix((vals, (rows, cols)), shape=(3 * N, N)).tocsr()
    D.sum_duplicates()
    return D


def _node_weights(domain: PlateDomain) -> np.ndarray:
    wx = np.full(domain.nx + 1, domain.dx)
    wx[[0, -1]] *= 0.5
    wy = np.full(domain.ny + 1, domain.dy)
    wy[[0, -1]] *= 0.5
    return np.outer(wx, wy).ravel()


def bending_system(domain: PlateDomain, A0,
                   enforce_point: bool = True) -> SparseSystem:
    A0f = np.array([[float(Q2.of(x)) for x in row] for row in _exact_a0(A0)])
    D = _curvature_matrix(domain)
    w = _node_weights(domain)
    S = sp.kron(sp.diags(w), sp.csr_matrix(A0f / 6.0), format="csr")
    K = (D.T @ S @ D).tocsr()
    cs = ConstraintSet(ncomp=1)
    cs.fix_nodes(domain.boundary_nodes(), comps=(0,))
    if enforce_point:
        node = domain.point_node
        if node is None:
            raise DomainError("domain has no support point")
        cs.add_lagrange([node], [1.0], 0.0)
    N = K.shape[0]
    return SparseSystem(matrix=K, rhs=np.zeros(N), constraints=cs)


def solve_bending(domain: PlateDomain, A0, g3, enforce_point: bool = True):
    """Clamped fourth-order solve; returns (w3, multiplier, energy).

    g3 is nodal samples (n_nodes,) or a callable on points.  The load pairs
    against the same trapezoid weights the energy uses.
    """
    system = bending_system(domain, A0, enforce_point=enforce_point)
    grid = domain.grid
    if callable(g3):
        g = np.asarray(g3(grid.nodes()), dtype=float).ravel()
    else:
        g = np.asarray(g3, dtype=float).ravel()
    if g.shape != (grid.n_nodes,):
        raise ValueError("bending load must be nodal (n_nodes,)")
    system.rhs = _node_weights(domain) * g
    x, lam, report = solve_constrained(system, tol=1e-8)
    if enforce_point:
        gap = abs(x[domain.point_node])
        if gap > 1e-12 * max(1.0, np.abs(x).max()):
            raise SolverError(f"support residual {gap:.3e} above 1e-12")
        mult = float(lam[0])
    else:
        mult = 0.0
    energy = 0.5 * float(x @ (system.matrix @ x)) - float(system.rhs @ x)
    return x, mult, energy


# ---------------------------------------------------------------------------
# loads and output
# ---------------------------------------------------------------------------

def load_from_spec(domain: PlateDomain, spec: str) -> Load:
    """CLI-facing load identifiers: 'constant', 'sine-bump', 'file:<csv>'."""
    pts = domain.grid.nodes()
    if spec == "constant":
        return Load(gprime=np.ones((len(pts), 2)), g3=np.ones(len(pts)),
                    note="constant unit load")
    if spec == "sine-bump":
        sx = np.sin(np.pi * pts[:, 0] / domain.a)
        sy = np.sin(np.pi * pts[:, 1] / domain.b)
        bump = sx * sy
        return Load(gprime=np.stack([bump, bump], axis=1), g3=bump,
                    note="half-sine bump")
    if spec.startswith("file:"):
        path = spec[5:]
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        if data.shape != (len(pts), 3):
            raise ValueError(
                f"load file needs {len(pts)} rows of g1,g2,g3")
        return Load(gprime=data[:, :2], g3=data[:, 2], note=f"file {path}")
    raise ValueError(f"unknown load spec {spec!r}")


def solve_plate(domain: PlateDomain, A0, load: Load,
                enforce_point: bool = True) -> KirchhoffSolution:
    w1, w2, em = solve_membrane(domain, A0, load.gprime)
    w3, mult, eb = solve_bending(domain, A0, load.g3,
                                 enforce_point=enforce_point)
    return KirchhoffSolution(w1=w1, w2=w2, w3=w3, multiplier=mult,
                             energy_membrane=em, energy_bending=eb)


def solution_csv(domain: PlateDomain, sol: KirchhoffSolution) -> str:
    pts = domain.grid.nodes()
    buf = io.StringIO()
    buf.write("y1,y2,w1,w2,w3\n")
    for k in range(len(pts)):
        buf.write(f"{pts[k, 0]:.12g},{pts[k, 1]:.12g},"
                  f"{sol.w1[k]:.12g},{sol.w2[k]:.12g},{sol.w3[k]:.12g}\n")
    return buf.getvalue()


# manufactured-solution helpers (shared by tests and the CLI demo)

def manufactured_membrane(domain: PlateDomain, table):
    """w' = sin(pi y1/a) sin(pi y2/b) (1,1) and g' = (membrane op) w'."""
    ka, kb = np.pi / domain.a, np.pi / domain.b
    tf = membrane_table_float(table)

    def w(pts):
        s = np.sin(ka * pts[:, 0]) * np.sin(kb * pts[:, 1])
        return np.stack([s, s], axis=1)

    def deriv(pts, a, b):
        fx = {0: np.sin(ka * pts[:, 0]), 1: ka * np.cos(ka * pts[:, 0]),
              2: -ka ** 2 * np.sin(ka * pts[:, 0])}[a]
        fy = {0: np.sin(kb * pts[:, 1]), 1: kb * np.cos(kb * pts[:, 1]),
              2: -kb ** 2 * np.sin(kb * pts[:, 1])}[b]
        return fx * fy

    def g(pts):
        out = np.zeros((len(pts), 2))
        for (a, b), M in tf.items():
            d = deriv(pts, a, b)
            for i in range(2):
                for j in range(2):
                    if M[i, j]:
                        out[:, i] += M[i, j] * d
        return out

    return w, g


def manufactured_bending(domain: PlateDomain, table):
    """w3 = sin^2(pi y1/a) sin^2(pi y2/b), clamped-compatible; g3 = op(w3)."""
    ka, kb = np.pi / domain.a, np.pi / domain.b
    tf = bending_table_float(table)

    def u_derivs(t, k):
        # d^m/dt^m sin^2(k t) for m = 0, 2, 4 via sin^2 = (1 - cos 2kt)/2
        c = np.cos(2 * k * t)
        return {0: (1 - c) / 2, 2: 2 * k ** 2 * c, 4: -8 * k ** 4 * c,
                1: k * np.sin(2 * k * t), 3: -4 * k ** 3 * np.sin(2 * k * t)}

    def w(pts):
        return u_derivs(pts[:, 0], ka)[0] * u_derivs(pts[:, 1], kb)[0]

    def g(pts):
        dx = u_derivs(pts[:, 0], ka)
        dy = u_derivs(pts[:, 1], kb)
        out = np.zeros(len(pts))
        for (a, b), c in tf.items():
            out += c * dx[a] * dy[b]
        return out

    return w, g
