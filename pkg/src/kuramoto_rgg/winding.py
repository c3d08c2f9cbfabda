"""Winding index of a phase configuration along the circular node order."""
from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from .circle import TWO_PI, DomainError, normalize, signed_diff
from .energy import twisted_ansatz
from .graphs import NodeSet

INDEX_ANTIPODAL_TOL = 1e-9
MAX_ROUNDING_RESIDUAL = 1e-6


class WindingResidualError(ArithmeticError):
    """Sum of signed differences is far from a multiple of 2*pi."""


@dataclass(frozen=True)
class IndexResult:
    value: Optional[int]
    min_gap_to_antipodal: float
    residual: float = 0.0

    @property
    def defined(self):
        return self.value is not None

    def to_dict(self):
        return {"value": self.value, "min_gap_to_antipodal": self.min_gap_to_antipodal,
                "residual": self.residual}


@dataclass(frozen=True)
class Region:
    """Membership of a configuration: inside some K_q or on the boundary."""

    boundary: bool
    q: Optional[int] = None

    @classmethod
    def interior(cls, q):
        return cls(False, q)


def consecutive_diffs(u) -> np.ndarray:
    """``signed_diff(u_j, u_{j-1})`` for j = 0..n-1, with ``u_{-1} = u_{n-1}``."""
    u = np.asarray(u, dtype=float)
    return signed_diff(u, np.roll(u, 1))


def winding_index(nodes, u, antipodal_tol=INDEX_ANTIPODAL_TOL) -> IndexResult:
    """Winding index of ``u`` with respect to the counterclockwise node order.

    Undefined (``value=None``) when a consecutive pair, the wrap pair
    included, is antipodal within ``antipodal_tol``.
    """
    u = np.asarray(u, dtype=float)
    if nodes is not None and u.shape != (len(nodes),):
        raise DomainError(f"phase vector has shape {u.shape}, expected ({len(nodes)},)")
    if u.ndim != 1 or u.size < 2:
        raise DomainError("winding index needs at least two phases")
    d = consecutive_diffs(u)
    gap = float(np.min(math.pi - np.abs(d)))
    if gap <= antipodal_tol:
        return IndexResult(None, gap)
    turns = float(np.sum(d)) / TWO_PI
    q = int(round(turns))
    residual = abs(turns - q)
    if residual > MAX_ROUNDING_RESIDUAL:
        raise WindingResidualError(f"signed differences sum to {turns} turns")
    return IndexResult(q, gap, residual)


def classify_K(nodes, u, antipodal_tol=INDEX_ANTIPODAL_TOL) -> Region:
    res = winding_index(nodes, u, antipodal_tol)
    return Region(True) if res.value is None else Region.interior(res.value)


def boundary_probe(nodes: NodeSet, q: int, k: int = 1) -> np.ndarray:
    """The q-twisted ansatz with node ``k`` flipped antipodal to node ``k-1``.

    ``k = 0`` pairs node 0 with node n-1 across the wrap.
    """
    n = nodes.count
    if n < 3:
        raise DomainError("boundary probes need n >= 3")
    if not 0 <= k < n:
        raise DomainError(f"probe index {k} out of range")
    u = np.array(twisted_ansatz(nodes, q), dtype=float)
    u[k] = normalize(u[k - 1] + math.pi)
    return u
