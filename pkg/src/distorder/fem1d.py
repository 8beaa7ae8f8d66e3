"""Piecewise-linear finite elements on [0, 1] for ``-(a u')' + q u``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import Expr, parse

__all__ = [
    "Mesh1D",
    "CoefficientField",
    "BoundarySpec",
    "TriDiag",
    "ThomasSolver",
    "FEOperators",
    "assemble",
    "solve_tridiag",
    "elliptic_solve",
    "boundary_flux",
    "naive_flux",
]

_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


class SingularSystemError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 3:
            raise ValueError("a mesh needs at least two elements")
        if np.any(np.diff(x) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @classmethod
    def uniform(cls, M: int, length: float = 1.0) -> "Mesh1D":
        return cls(np.linspace(0.0, length, M + 1))

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    def node_index(self, x: float) -> int:
        i = int(np.argmin(np.abs(self.nodes - x)))
        if abs(self.nodes[i] - x) > 1e-12 * max(1.0, abs(x)):
            raise ValueError(f"{x} is not a mesh node")
        return i


@dataclass(frozen=True)
class CoefficientField:
    """Diffusivity ``a(x) > 0`` and potential ``q(x) >= 0``."""

    a: Expr
    q: Expr

    @classmethod
    def from_strings(cls, a: str = "1", q: str = "0") -> "CoefficientField":
        return cls(parse(a), parse(q))


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary condition kind with data at x = 0 and x = 1 (expressions in t).

    Neumann data are conormal derivatives ``a u' nu`` with ``nu`` the outward
    normal.
    """

    kind: str
    left: Expr = parse("0")
    right: Expr = parse("0")

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")

    @classmethod
    def dirichlet(cls, left="0", right="0") -> "BoundarySpec":
        return cls("dirichlet", _as_expr(left), _as_expr(right))

    @classmethod
    def neumann(cls, left="0", right="0") -> "BoundarySpec":
        return cls("neumann", _as_expr(left), _as_expr(right))

    def homogeneous(self) -> "BoundarySpec":
        return BoundarySpec(self.kind)

    def data(self, t: float) -> tuple[float, float]:
        return float(self.left(t=t)), float(self.right(t=t))


def _as_expr(v) -> Expr:
    return v if isinstance(v, Expr) else parse(str(v))


@dataclass
class TriDiag:
    """Symmetric or general tridiagonal matrix.

    ``lower[i] = A[i+1, i]``, ``upper[i] = A[i, i+1]``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    def __add__(self, other: "TriDiag") -> "TriDiag":
        return TriDiag(self.lower + other.lower, self.diag + other.diag, self.upper + other.upper)

    def __rmul__(self, c: float) -> "TriDiag":
        return TriDiag(c * self.lower, c * self.diag, c * self.upper)

    def copy(self) -> "TriDiag":
        return TriDiag(self.lower.copy(), self.diag.copy(), self.upper.copy())

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag[:, None] * x.reshape(self.n, -1)
        xx = x.reshape(self.n, -1)
        y[:-1] += self.upper[:, None] * xx[1:]
        y[1:] += self.lower[:, None] * xx[:-1]
        return y.reshape(x.shape)

    __matmul__ = matvec

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)


class ThomasSolver:
    """LU factors of a tridiagonal matrix for repeated solves (no pivoting)."""

    def __init__(self, A: TriDiag):
        n = A.n
        self.n = n
        self.lower = A.lower.astype(float).copy()
        cp = np.zeros(max(n - 1, 0))
        den = np.zeros(n)
        scale = np.max(np.abs(A.diag)) if n else 1.0
        den[0] = A.diag[0]
        for i in range(n):
            if i > 0:
                den[i] = A.diag[i] - A.lower[i - 1] * cp[i - 1]
            if abs(den[i]) <= 1e-300 or abs(den[i]) <= 1e-15 * scale:
                raise SingularSystemError(f"zero pivot at row {i}")
            if i < n - 1:
                cp[i] = A.upper[i] / den[i]
        self.cp = cp
        self.den = den

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        d = np.array(rhs, dtype=float).reshape(self.n, -1)
        n, lo, cp, den = self.n, self.lower, self.cp, self.den
        d[0] /= den[0]
        for i in range(1, n):
            d[i] = (d[i] - lo[i - 1] * d[i - 1]) / den[i]
        for i in range(n - 2, -1, -1):
            d[i] -= cp[i] * d[i + 1]
        return d.reshape(np.shape(rhs))


def solve_tridiag(sys: TriDiag, rhs: np.ndarray) -> np.ndarray:
    return ThomasSolver(sys).solve(rhs)


def assemble(mesh: Mesh1D, coeff: CoefficientField) -> tuple[TriDiag, TriDiag]:
    """Mass and stiffness matrices with two-point Gauss quadrature per element.

    The stiffness matrix carries both the diffusion and the potential term.
    """
    x = mesh.nodes
    h = mesh.h
    g0, g1 = _GAUSS
    xq = np.stack([x[:-1] + g0 * h, x[:-1] + g1 * h])  # (2, M)
    a = np.asarray(coeff.a(x=xq), dtype=float) * np.ones_like(xq)
    q = np.asarray(coeff.q(x=xq), dtype=float) * np.ones_like(xq)
    if np.any(a <= 0):
        raise ValueError("diffusivity must be positive at every quadrature point")
    if np.any(q < 0):
        raise ValueError("potential must be nonnegative")

    # local shape values at the Gauss points: phi_left = 1 - s, phi_right = s
    s = np.array([g0, g1])[:, None]
    pl, pr = 1.0 - s, s
    wts = 0.5 * h  # both Gauss weights equal h/2

    ka = wts * (a[0] + a[1]) / h**2
    m_ll = wts * (pl[0] ** 2 + pl[1] ** 2)
    m_lr = wts * (pl[0] * pr[0] + pl[1] * pr[1])
    m_rr = wts * (pr[0] ** 2 + pr[1] ** 2)
    q_ll = wts * (q[0] * pl[0] ** 2 + q[1] * pl[1] ** 2)
    q_lr = wts * (q[0] * pl[0] * pr[0] + q[1] * pl[1] * pr[1])
    q_rr = wts * (q[0] * pr[0] ** 2 + q[1] * pr[1] ** 2)

    n = mesh.M + 1
    md = np.zeros(n)
    md[:-1] += m_ll
    md[1:] += m_rr
    sd = np.zeros(n)
    sd[:-1] += ka + q_ll
    sd[1:] += ka + q_rr
    mass = TriDiag(m_lr.copy(), md, m_lr.copy())
    off = -ka + q_lr
    stiff = TriDiag(off.copy(), sd, off.copy())
    return mass, stiff


class FEOperators:
    """Assembled operators plus boundary bookkeeping for one problem."""

    def __init__(self, mesh: Mesh1D, coeff: CoefficientField, bc: BoundarySpec):
        self.mesh = mesh
        self.coeff = coeff
        self.bc = bc
        self.mass, self.stiffness = assemble(mesh, coeff)
        self.boundary_nodes = (0, mesh.M)

    @property
    def size(self) -> int:
        return self.mesh.M + 1

    def system(self, c_mass: float, c_stiff: float = 1.0) -> TriDiag:
        """``c_mass * M + c_stiff * S`` with Dirichlet rows/columns replaced by identity."""
        A = c_mass * self.mass + c_stiff * self.stiffness
        if self.bc.kind == "dirichlet":
            A = A.copy()
            A.diag[0] = 1.0
            A.upper[0] = 0.0
            A.lower[0] = 0.0
            A.diag[-1] = 1.0
            A.lower[-1] = 0.0
            A.upper[-1] = 0.0
        return A

    def factor(self, c_mass: float, c_stiff: float = 1.0) -> ThomasSolver:
        return ThomasSolver(self.system(c_mass, c_stiff))

    def apply_bc(self, A_full: TriDiag, rhs: np.ndarray, t: float | None,
                 homogeneous: bool = False) -> np.ndarray:
        """Boundary contributions to a right-hand side for ``A_full u = rhs``.

        Neumann data enter as point loads at the boundary nodes. Dirichlet
        values are imposed by elimination; ``A_full`` is the matrix before the
        identity rows were inserted, needed to move known columns to the rhs.
        """
        rhs = np.array(rhs, dtype=float)
        gl, gr = (0.0, 0.0) if homogeneous or t is None else self.bc.data(t)
        if self.bc.kind == "neumann":
            rhs[0] += gl
            rhs[-1] += gr
        else:
            if gl != 0.0:
                rhs[1] -= A_full.lower[0] * gl
            if gr != 0.0:
                rhs[-2] -= A_full.upper[-1] * gr
            rhs[0] = gl
            rhs[-1] = gr
        return rhs

    def interpolate(self, e: Expr) -> np.ndarray:
        return np.asarray(e(x=self.mesh.nodes), dtype=float) * np.ones(self.size)

    def l2_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(u @ self.mass.matvec(u)))


def elliptic_solve(ops: FEOperators, load: np.ndarray) -> np.ndarray:
    """Solve ``A w = load`` (load given by nodal values) with homogeneous data."""
    if ops.bc.kind == "neumann":
        qn = np.asarray(ops.coeff.q(x=ops.mesh.nodes), dtype=float)
        if np.all(qn == 0):
            raise SingularSystemError("pure Neumann problem with q = 0 is singular")
    rhs = ops.mass.matvec(np.asarray(load, dtype=float))
    A = ops.stiffness
    rhs = ops.apply_bc(A, rhs, None, homogeneous=True)
    return ops.factor(0.0, 1.0).solve(rhs)


def boundary_flux(ops: FEOperators, u: np.ndarray, side: str,
                  residual: np.ndarray | None = None) -> float:
    """Outward conormal flux ``a u' nu`` recovered from the discrete equation.

    The equation row of the boundary hat function reads
    ``(S u)_b + residual_b = flux_b`` where ``residual`` collects the
    remaining terms of the discrete problem, e.g. ``M (d_t u - f)``.
    """
    b = _side_index(ops, side)
    flux = (ops.stiffness.matvec(u))[b]
    if residual is not None:
        flux += residual[b]
    return float(flux)


def naive_flux(ops: FEOperators, u: np.ndarray, side: str) -> float:
    """One-sided difference ``a(x_b) (u_1 - u_0) / h`` with outward sign."""
    x = ops.mesh.nodes
    if side == "left":
        a = float(ops.coeff.a(x=x[0]))
        return -a * (u[1] - u[0]) / (x[1] - x[0])
    a = float(ops.coeff.a(x=x[-1]))
    return a * (u[-1] - u[-2]) / (x[-1] - x[-2])


def _side_index(ops: FEOperators, side: str) -> int:
    if side == "left":
        return 0
    if side == "right":
        return ops.mesh.M
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")
