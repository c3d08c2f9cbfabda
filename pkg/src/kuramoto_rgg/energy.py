"""Kuramoto energy on a graph, its gradient and stability certificates.

The energy of a phase vector ``u`` is

    E(u) = pi / (2 n^2 eps^3) * sum_i sum_{j ~ i} w_ij (1 - cos(u_j - u_i))

with every undirected edge counted once from each endpoint. Its negative
gradient is the right-hand side of the homogeneous Kuramoto system.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .circle import DomainError, normalize, signed_diff
from .graphs import Graph, NodeSet


class EigenSolverError(RuntimeError):
    """The iterative eigensolver did not converge within its budget."""


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    grad_inf_norm: float
    scaling_factor: float

    def to_dict(self):
        return {"energy": self.energy, "grad_inf_norm": self.grad_inf_norm,
                "scaling_factor": self.scaling_factor}


def max_twist(n) -> int:
    """Largest |q| for which configurations of winding q exist on n nodes."""
    return (n - 1) // 2


def twisted_ansatz(nodes: NodeSet, q: int, check_range=True) -> np.ndarray:
    """Phases ``q * x_i`` reduced to [0, 2*pi).

    Twists with ``|q| > floor((n-1)/2)`` raise :class:`DomainError` since no
    configuration of that index exists; pass ``check_range=False`` to get
    the raw map anyway (it then lands on or beyond an antipodal boundary).
    """
    if check_range and abs(q) > max_twist(nodes.count):
        raise DomainError(f"|q|={abs(q)} exceeds floor((n-1)/2)={max_twist(nodes.count)}")
    return normalize(q * nodes.angles)


def gauge_fix(u) -> np.ndarray:
    """Shift phases to zero mean."""
    u = np.asarray(u, dtype=float)
    return u - u.mean()


def _phases(g: Graph, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (g.n,):
        raise DomainError(f"phase vector has shape {u.shape}, graph has {g.n} nodes")
    return u


def energy(g: Graph, u) -> float:
    u = _phases(g, u)
    i, j = g.edges[:, 0], g.edges[:, 1]
    # 2 sin^2(d/2) == 1 - cos(d) without cancellation for small d
    terms = 2.0 * np.sin(0.5 * (u[j] - u[i])) ** 2
    return float(2.0 * g.energy_scale * np.dot(g.edge_weights, terms))


def energy_gradient(g: Graph, u) -> np.ndarray:
    """Gradient of :func:`energy`; component i is
    ``-(pi / (n^2 eps^3)) * sum_{j ~ i} w_ij sin(u_j - u_i)``."""
    u = _phases(g, u)
    i, j = g.edges[:, 0], g.edges[:, 1]
    s = g.edge_weights * np.sin(u[j] - u[i])
    c = 2.0 * g.energy_scale
    return c * (np.bincount(j, weights=s, minlength=g.n)
                - np.bincount(i, weights=s, minlength=g.n))


def energy_report(g: Graph, u) -> EnergyReport:
    grad = energy_gradient(g, u)
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    return EnergyReport(energy(g, u), gnorm, g.energy_scale)


def pi_half_certificate(g: Graph, u) -> bool:
    """True iff every edge carries a phase gap strictly below pi/2."""
    u = _phases(g, u)
    if g.num_edges == 0:
        return True
    gaps = np.abs(signed_diff(u[g.edges[:, 1]], u[g.edges[:, 0]]))
    return bool(np.all(gaps < math.pi / 2))


def hessian_vector_product(g: Graph, u):
    """Return ``v -> H v`` for the Hessian of the energy at ``u``.

    ``(H v)_i = (pi / (n^2 eps^3)) sum_{j ~ i} w_ij cos(u_j - u_i) (v_i - v_j)``
    """
    u = _phases(g, u)
    i, j = g.edges[:, 0], g.edges[:, 1]
    cw = 2.0 * g.energy_scale * g.edge_weights * np.cos(u[j] - u[i])
    n = g.n

    def matvec(v):
        v = np.asarray(v, dtype=float).reshape(-1)
        t = cw * (v[i] - v[j])
        return np.bincount(i, weights=t, minlength=n) - np.bincount(j, weights=t, minlength=n)

    return matvec


def hessian_spectral_bound(g: Graph) -> float:
    """Gershgorin bound on the spectral radius of the Hessian at any state."""
    if g.num_edges == 0:
        return 0.0
    return float(4.0 * g.energy_scale * g.weighted_degrees().max())


def hessian_min_eigenvalue(g: Graph, u, tol=1e-12, maxiter=None) -> float:
    """Smallest Hessian eigenvalue on the complement of the constant vector.

    The shift direction ``(1, ..., 1)`` is always a zero mode; it is lifted
    above the spectrum by adding ``sigma * 11^T / n`` before running
    Lanczos (ARPACK) on the matrix-free product. Raises
    :class:`EigenSolverError` when ARPACK does not converge.
    """
    n = g.n
    if n < 2:
        raise DomainError("need at least two nodes")
    hv = hessian_vector_product(g, u)
    sigma = hessian_spectral_bound(g) + 1.0

    def matvec(v):
        v = np.asarray(v, dtype=float).reshape(-1)
        return hv(v) + sigma * v.mean()

    if n == 2:
        # complement of the constant vector is spanned by (1, -1)
        e = np.array([1.0, -1.0])
        return float(e @ matvec(e) / 2.0)
    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    v0 = np.cos(np.arange(n) + 0.5)
    ncv = min(n, max(20, 2 * int(math.sqrt(n))))
    try:
        vals = eigsh(op, k=1, which="SA", tol=tol, maxiter=maxiter, ncv=ncv, v0=v0,
                     return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise EigenSolverError(f"ARPACK did not converge for n={n}") from exc
    return float(vals[0])
