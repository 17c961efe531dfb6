"""1D P1/P0 finite elements for the potential-to-state map.

The state ``z = S(x)`` solves the Neumann problem

    -z'' + x z = f  on (a, b),   z'(a) = z'(b) = 0,

with ``x`` piecewise constant (one value per element) and ``z`` piecewise
linear (one value per node).  All element integrals are exact.

Inner products
--------------
Coefficients (P0) use ``<x1, x2> = h * sum(x1 * x2)``.  Nodal functions
(P1) use the lumped (trapezoidal) mass ``W = diag(h/2, h, ..., h, h/2)``.
The lumped dual weight keeps every pointwise proximal map exact in the
weighted norm; see :func:`node_weights`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError
from scipy.linalg.lapack import dpttrf, dpttrs

__all__ = [
    "UniformMesh1D",
    "TridiagonalSystem",
    "CoefficientBoundError",
    "assemble_system",
    "assemble_weighted_mass",
    "load_vector",
    "solve_state",
    "apply_dS",
    "apply_dS_adjoint",
    "estimate_L_tilde",
    "element_weights",
    "node_weights",
]

DEFAULT_COEFFICIENT_FLOOR = 1e-3


class CoefficientBoundError(ValueError):
    """Raised when a potential coefficient falls below its floor."""


@dataclass(frozen=True)
class UniformMesh1D:
    a: float = -1.0
    b: float = 1.0
    n_elements: int = 1000

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise ValueError(f"n_elements must be an integer >= 2, got {self.n_elements}")
        if not self.b > self.a:
            raise ValueError(f"need a < b, got ({self.a}, {self.b})")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_elements

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n_nodes)

    @property
    def midpoints(self) -> np.ndarray:
        nodes = self.nodes
        return 0.5 * (nodes[:-1] + nodes[1:])


def element_weights(mesh: UniformMesh1D) -> np.ndarray:
    """Quadrature weights of the L2 inner product on piecewise constants."""
    return np.full(mesh.n_elements, mesh.h)


def node_weights(mesh: UniformMesh1D) -> np.ndarray:
    """Lumped-mass weights of the L2 inner product on piecewise linears."""
    w = np.full(mesh.n_nodes, mesh.h)
    w[0] = w[-1] = 0.5 * mesh.h
    return w


@dataclass
class TridiagonalSystem:
    """Symmetric tridiagonal matrix stored as main and first off-diagonal.

    ``row_sums`` optionally carries the exact row sums.  For an M-matrix
    (nonpositive off-diagonal, nonnegative row sums) the factorization then
    runs on the diagonal excess ``q_i = p_i - |e_i|`` of each pivot, which
    avoids the cancellation in ``d_i - e_{i-1}^2 / p_{i-1}`` when the
    diagonal is dominated by the stiffness part.
    """

    diag: np.ndarray
    off: np.ndarray
    row_sums: np.ndarray | None = None
    _factor: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.diag.shape[0]

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out

    def _dominant_pivots(self):
        if self.row_sums is None or np.any(self.off > 0) or np.any(self.row_sums < 0):
            return None
        s = self.row_sums.tolist()
        a = (-self.off).tolist()
        n = len(s)
        pivots = [0.0] * n
        q = s[0]
        for i in range(n - 1):
            p = q + a[i]
            pivots[i] = p
            q = s[i + 1] + a[i] * (q / p)
        pivots[-1] = q
        d = np.array(pivots)
        if not np.all(d > 0):
            return None
        return d, self.off / d[:-1]

    def factor(self):
        """LDL^T factorization; cached on first use.

        Uses the row-sum recurrence when it applies and LAPACK ``pttrf``
        otherwise.
        """
        if self._factor is None:
            factor = self._dominant_pivots()
            if factor is None:
                d, e, info = dpttrf(self.diag, self.off)
                if info != 0:
                    raise LinAlgError(
                        f"system is not positive definite (pttrf info={info})")
                factor = (d, e)
            self._factor = factor
        return self._factor

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        d, e = self.factor()
        x, info = dpttrs(d, e, rhs)
        if info != 0:
            raise LinAlgError(f"pttrs failed with info={info}")
        return x


def _check_coefficient(mesh, x, lower_bound):
    x = np.asarray(x, dtype=float)
    if x.shape != (mesh.n_elements,):
        raise ValueError(
            f"coefficient has shape {x.shape}, expected ({mesh.n_elements},)")
    if lower_bound is not None and np.any(x < lower_bound):
        k = int(np.argmin(x))
        raise CoefficientBoundError(
            f"coefficient {x[k]:.3e} in element {k} is below the floor {lower_bound:g}")
    return x


def assemble_weighted_mass(mesh: UniformMesh1D, weight: np.ndarray) -> TridiagonalSystem:
    """P1 mass matrix with piecewise-constant ``weight``: entries of int(weight phi_i phi_j)."""
    h = mesh.h
    weight = np.asarray(weight, dtype=float)
    diag = np.zeros(mesh.n_nodes)
    diag[:-1] += weight * h / 3.0
    diag[1:] += weight * h / 3.0
    off = weight * h / 6.0
    return TridiagonalSystem(diag, off)


def assemble_system(mesh: UniformMesh1D, x,
                    lower_bound: float | None = DEFAULT_COEFFICIENT_FLOOR) -> TridiagonalSystem:
    """Assemble ``A(x) = K_stiff + M(x)`` for the coercive Neumann weak form.

    Parameters
    ----------
    mesh : UniformMesh1D
    x : array_like, shape (n_elements,)
        Piecewise-constant potential.
    lower_bound : float or None
        Floor enforced on ``x``.  ``None`` skips the check; positive
        definiteness is then only verified when the system is factored.
    """
    x = _check_coefficient(mesh, x, lower_bound)
    h = mesh.h
    mass = assemble_weighted_mass(mesh, x)
    diag = mass.diag
    diag[:-1] += 1.0 / h
    diag[1:] += 1.0 / h
    off = mass.off - 1.0 / h
    # stiffness rows sum to zero, mass rows to h/2 per adjacent element
    row_sums = np.zeros(mesh.n_nodes)
    row_sums[:-1] += 0.5 * h * x
    row_sums[1:] += 0.5 * h * x
    return TridiagonalSystem(diag, off, row_sums)


def load_vector(mesh: UniformMesh1D, f) -> np.ndarray:
    """Exact load vector of a nodal (P1) right-hand side; scalars mean constants."""
    f = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_nodes,))
    return assemble_weighted_mass(mesh, np.ones(mesh.n_elements)).matvec(np.array(f))


def solve_state(mesh: UniformMesh1D, x, f=1.0, *, system: TridiagonalSystem | None = None,
                lower_bound: float | None = DEFAULT_COEFFICIENT_FLOOR) -> np.ndarray:
    """Nodal values of ``S(x)`` for right-hand side ``f`` (default ``f = 1``)."""
    if system is None:
        system = assemble_system(mesh, x, lower_bound)
    return system.solve(load_vector(mesh, f))


def apply_dS(mesh: UniformMesh1D, x, z: np.ndarray, h_dir, *,
             system: TridiagonalSystem | None = None,
             lower_bound: float | None = DEFAULT_COEFFICIENT_FLOOR) -> np.ndarray:
    """Directional derivative ``w = S'(x) h_dir`` given ``z = S(x)``.

    Differentiating ``A(x) z = F`` gives ``A(x) w = -M(h_dir) z``.
    """
    if system is None:
        system = assemble_system(mesh, x, lower_bound)
    rhs = assemble_weighted_mass(mesh, h_dir).matvec(np.asarray(z, dtype=float))
    return system.solve(-rhs)


def apply_dS_adjoint(mesh: UniformMesh1D, x, z: np.ndarray, w, *,
                     system: TridiagonalSystem | None = None,
                     lower_bound: float | None = DEFAULT_COEFFICIENT_FLOOR) -> np.ndarray:
    """Adjoint derivative ``S'(x)^* w`` as a piecewise-constant vector.

    Solves the adjoint equation ``A(x) p = W w`` and returns, per element,
    ``-(1/h) * int_e z p``.  Adjoint with :func:`apply_dS` under
    :func:`element_weights` and :func:`node_weights`.
    """
    if system is None:
        system = assemble_system(mesh, x, lower_bound)
    p = system.solve(node_weights(mesh) * np.asarray(w, dtype=float))
    z = np.asarray(z, dtype=float)
    za, zb = z[:-1], z[1:]
    pa, pb = p[:-1], p[1:]
    # exact int_e z p for two P1 functions, divided by h
    return -(2.0 * za * pa + za * pb + zb * pa + 2.0 * zb * pb) / 6.0


def estimate_L_tilde(mesh: UniformMesh1D, x0, f=1.0) -> float:
    """Step-length scale ``max(1, ||S'(x0) x0|| / ||x0||)`` in L2 norms.

    A first-derivative Rayleigh-type heuristic; for ``x0 = 1, f = 1`` the
    ratio is exactly 1.
    """
    x0 = np.asarray(x0, dtype=float)
    norm_x0 = np.sqrt(np.sum(element_weights(mesh) * x0**2))
    if norm_x0 == 0.0:
        raise ValueError("cannot estimate the Lipschitz scale at x0 = 0")
    system = assemble_system(mesh, x0)
    z0 = solve_state(mesh, x0, f, system=system)
    w = apply_dS(mesh, x0, z0, x0, system=system)
    ratio = np.sqrt(np.sum(node_weights(mesh) * w**2)) / norm_x0
    return max(1.0, float(ratio))
