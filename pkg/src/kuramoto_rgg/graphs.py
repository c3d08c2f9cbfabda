"""Node sampling on the circle and the graph families built on top of it.

Every family shares the same storage: the node angles sorted
counterclockwise and an undirected edge list ``(i, j)`` with ``i < j``.
Optional per-edge weights are used by the kernel-weighted family only.
"""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
import math
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .circle import TWO_PI, DomainError, geodesic_distance, normalize, signed_diff

SAMPLING_MODES = ("fixed_n", "poissonized")
VARIANTS = ("rgg", "knn", "boolean", "random_nn", "weighted_kernel")


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Sorted node angles in [0, 2*pi)."""

    angles: np.ndarray
    sampling_mode: str = "fixed_n"

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise DomainError("a node set needs a nonempty 1-d array of angles")
        a = normalize(a) if a.size > 1 else np.atleast_1d(normalize(a))
        if np.any(np.diff(a) <= 0):
            raise DomainError("node angles must be distinct and sorted ascending")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @property
    def count(self) -> int:
        return int(self.angles.size)

    def __len__(self):
        return self.count


def _draw_distinct(n, rng):
    while True:
        x = np.sort(rng.uniform(0.0, TWO_PI, size=n))
        # duplicates and a rounded-up 2*pi both break strict sorting
        if np.all(np.diff(x) > 0) and (n == 0 or x[-1] < TWO_PI):
            return x


def sample_nodes(n, mode="fixed_n", rng=None, resample_small=True) -> NodeSet:
    """Sample node angles i.i.d. uniform on the circle.

    ``mode="poissonized"`` first draws the node count from Poisson(n). A
    draw below 2 is redrawn when ``resample_small`` is set and raises
    otherwise.
    """
    if mode not in SAMPLING_MODES:
        raise DomainError(f"unknown sampling mode {mode!r}")
    rng = np.random.default_rng(rng)
    if mode == "fixed_n":
        if n < 2:
            raise DomainError(f"fixed_n sampling needs n >= 2, got {n}")
        count = int(n)
    else:
        if n < 1:
            raise DomainError(f"poissonized sampling needs intensity n >= 1, got {n}")
        count = int(rng.poisson(n))
        while count < 2:
            if not resample_small:
                raise DomainError(f"Poisson draw produced {count} nodes")
            count = int(rng.poisson(n))
    return NodeSet(_draw_distinct(count, rng), sampling_mode=mode)


def project_from_tube(points, epsilon) -> NodeSet:
    """Project points near the unit circle of the (x, y) plane onto it.

    ``points`` has shape ``(m, d)`` with ``d >= 2``; the circle sits in the
    first two coordinates and every point must lie within ``epsilon`` of it.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[1] < 2:
        raise DomainError("points need at least two coordinates")
    rho = np.hypot(p[:, 0], p[:, 1])
    if np.any(rho == 0.0):
        raise DomainError("projection undefined for points on the circle's axis")
    dist = np.sqrt((rho - 1.0) ** 2 + np.sum(p[:, 2:] ** 2, axis=1))
    if np.any(dist >= epsilon):
        raise DomainError(f"point farther than epsilon={epsilon} from the circle")
    return NodeSet(np.sort(normalize(np.arctan2(p[:, 1], p[:, 0]))))


def sample_tube(n, epsilon, dim=3, rng=None) -> np.ndarray:
    """Uniform points in the ``epsilon``-neighbourhood of the unit circle in R^dim."""
    rng = np.random.default_rng(rng)
    out = np.empty((0, dim))
    lo = np.r_[-1 - epsilon, -1 - epsilon, [-epsilon] * (dim - 2)]
    hi = -lo
    while out.shape[0] < n:
        cand = rng.uniform(lo, hi, size=(2 * n, dim))
        rho = np.hypot(cand[:, 0], cand[:, 1])
        d = np.sqrt((rho - 1.0) ** 2 + np.sum(cand[:, 2:] ** 2, axis=1))
        out = np.vstack([out, cand[d < epsilon]])
    return out[:n]


@lru_cache(maxsize=None)
def _bump_mass():
    return integrate.quad(lambda z: math.exp(-1.0 / (1.0 - z * z)), -1.0, 1.0,
                          epsabs=1e-14, epsrel=1e-14)[0]


def bump_kernel(z):
    """Smooth even kernel supported on (-1, 1) with unit integral."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2)) / _bump_mass()
    return out


@dataclass(frozen=True)
class GraphModel:
    """Edge rule of a graph family.

    Use the class-method constructors. ``radius_law`` (boolean model) and
    ``count_law`` (random N-nn) are callables ``law(rng, size)``; when they
    are omitted the defaults are uniform radii on (0, rho) and the constant
    count ``k``. Custom laws must come with their mean (``mean_radius`` or
    ``mean_count``), which sets the energy scaling.
    """

    variant: str
    epsilon: Optional[float] = None
    k: Optional[int] = None
    rho: Optional[float] = None
    count_law_name: str = "constant"
    radius_law: Optional[Callable] = field(default=None, compare=False)
    mean_radius: Optional[float] = None
    count_law: Optional[Callable] = field(default=None, compare=False)
    mean_count: Optional[float] = None
    kernel: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown graph variant {self.variant!r}")
        if self.variant in ("rgg", "weighted_kernel"):
            if self.epsilon is None or not 0.0 < self.epsilon < math.pi:
                raise DomainError(f"{self.variant} needs 0 < epsilon < pi, got {self.epsilon}")
        elif self.variant == "knn":
            if self.k is None or self.k < 1:
                raise DomainError(f"knn needs k >= 1, got {self.k}")
        elif self.variant == "boolean":
            if self.radius_law is None:
                if self.rho is None or not 0.0 < self.rho <= math.pi / 2:
                    raise DomainError(f"boolean model needs 0 < rho <= pi/2, got {self.rho}")
            elif self.mean_radius is None:
                raise DomainError("a custom radius law needs mean_radius")
        elif self.variant == "random_nn":
            if self.count_law is None:
                if self.k is None or self.k < 1:
                    raise DomainError(f"random_nn needs a mean count k >= 1, got {self.k}")
                if self.count_law_name not in ("constant", "poisson"):
                    raise DomainError(f"unknown count law {self.count_law_name!r}")
            elif self.mean_count is None:
                raise DomainError("a custom count law needs mean_count")

    @classmethod
    def rgg(cls, epsilon):
        return cls("rgg", epsilon=float(epsilon))

    @classmethod
    def knn(cls, k):
        return cls("knn", k=int(k))

    @classmethod
    def boolean(cls, rho=None, radius_law=None, mean_radius=None):
        return cls("boolean", rho=rho, radius_law=radius_law, mean_radius=mean_radius)

    @classmethod
    def random_nn(cls, k=None, law="constant", count_law=None, mean_count=None):
        return cls("random_nn", k=k, count_law_name=law, count_law=count_law,
                   mean_count=mean_count)

    @classmethod
    def weighted_kernel(cls, epsilon, kernel=None):
        return cls("weighted_kernel", epsilon=float(epsilon), kernel=kernel)

    @property
    def is_random(self):
        return self.variant in ("boolean", "random_nn")

    def effective_epsilon(self, n):
        """Length scale used in the energy normalisation ``pi / (2 n^2 eps^3)``.

        k-nn families use the rgg radius with the same expected degree
        (``pi k / n``); the boolean model uses twice the mean radius.
        """
        if self.variant in ("rgg", "weighted_kernel"):
            return self.epsilon
        if self.variant == "knn":
            return math.pi * self.k / n
        if self.variant == "boolean":
            mean_r = self.rho / 2.0 if self.radius_law is None else self.mean_radius
            return 2.0 * mean_r
        mean_k = self.k if self.count_law is None else self.mean_count
        return math.pi * mean_k / n

    def label(self):
        return self.variant


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph on a sorted node set.

    ``edges`` is an ``(m, 2)`` integer array with ``i < j`` on every row,
    sorted lexicographically. ``weights`` is ``None`` for unweighted graphs.
    """

    nodes: NodeSet
    edges: np.ndarray
    model: GraphModel
    weights: Optional[np.ndarray] = None
    epsilon: float = 0.0
    scale_n: Optional[int] = None

    @property
    def n(self) -> int:
        return self.nodes.count

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def energy_scale(self) -> float:
        """Prefactor ``pi / (2 n^2 eps^3)`` of the ordered-pair energy sum.

        ``n`` is the node count unless ``scale_n`` overrides it (Poissonized
        samples keep the nominal intensity in the normalisation).
        """
        n = self.scale_n if self.scale_n is not None else self.n
        return math.pi / (2.0 * n ** 2 * self.epsilon ** 3)

    @cached_property
    def edge_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.num_edges)
        return self.weights

    @cached_property
    def _csr(self):
        n, e = self.n, self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((cols, rows))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return indptr, cols[order]

    def neighbors(self, i) -> np.ndarray:
        indptr, idx = self._csr
        return idx[indptr[i]:indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self._csr[0])

    def weighted_degrees(self) -> np.ndarray:
        w = self.edge_weights
        return (np.bincount(self.edges[:, 0], weights=w, minlength=self.n)
                + np.bincount(self.edges[:, 1], weights=w, minlength=self.n))

    def has_edge(self, i, j) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < nb.size and nb[k] == j)


def _canonical_edges(a, b, n):
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    keys = np.unique(lo * n + hi)
    return np.column_stack([keys // n, keys % n])


def _forward_pairs(x, reach):
    """All (i, j) with j counterclockwise from i at arc length below ``reach[i]``.

    ``reach`` must stay below pi so that every unordered pair shows up at
    most once. Candidates are padded by a few ulps; callers filter exactly.
    """
    n = x.size
    xx = np.concatenate([x, x + TWO_PI])
    hi = np.searchsorted(xx, x + reach * (1 + 1e-12) + 1e-15, side="left")
    hi = np.minimum(hi, np.arange(n) + n)
    counts = hi - np.arange(n) - 1
    src = np.repeat(np.arange(n), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    dst = (src + 1 + offs) % n
    return src, dst


def _rgg_edges(x, eps):
    src, dst = _forward_pairs(x, np.full(x.size, eps))
    keep = geodesic_distance(x[src], x[dst]) < eps
    return _canonical_edges(src[keep], dst[keep], x.size)


def _knn_edges(x, ks):
    """Symmetrised k-nearest-neighbour rule with per-node ``ks``.

    Ties in distance go to the smaller node index.
    """
    n = x.size
    kmax = int(ks.max())
    if 2 * kmax + 1 >= n:
        cand = np.array([[j for j in range(n) if j != i] for i in range(n)], dtype=np.int64)
    else:
        offs = np.r_[np.arange(-kmax, 0), np.arange(1, kmax + 1)]
        cand = (np.arange(n)[:, None] + offs[None, :]) % n
    dist = geodesic_distance(x[:, None], x[cand])
    rows = np.repeat(np.arange(n), cand.shape[1])
    # row-major sort: rows stay grouped, each row ordered by (distance, index)
    order = np.lexsort((cand.ravel(), dist.ravel(), rows))
    chosen = cand.ravel()[order].reshape(cand.shape)
    mask = np.arange(cand.shape[1])[None, :] < ks[:, None]
    src = np.broadcast_to(np.arange(n)[:, None], chosen.shape)[mask]
    return _canonical_edges(src, chosen[mask], n)


def _boolean_edges(x, radii):
    src, dst = _forward_pairs(x, radii + radii.max())
    keep = geodesic_distance(x[src], x[dst]) < radii[src] + radii[dst]
    return _canonical_edges(src[keep], dst[keep], x.size)


def build_graph(nodes: NodeSet, model: GraphModel, rng=None, scale_n=None) -> Graph:
    """Build the edge set of ``model`` on ``nodes``.

    ``rng`` feeds the auxiliary draws of the random families (radii,
    neighbour counts) and is ignored otherwise. ``scale_n`` replaces the
    node count in the energy normalisation.
    """
    n = nodes.count
    if n < 2:
        raise DomainError("a graph needs at least two nodes")
    x = nodes.angles
    weights = None
    if model.variant == "rgg":
        edges = _rgg_edges(x, model.epsilon)
    elif model.variant == "weighted_kernel":
        edges = _rgg_edges(x, model.epsilon)
        kernel = model.kernel or bump_kernel
        z = signed_diff(x[edges[:, 1]], x[edges[:, 0]]) / model.epsilon
        w = np.asarray(kernel(z), dtype=float)
        if np.any(w < 0) or not np.allclose(w, kernel(-z)):
            raise DomainError("kernel must be nonnegative and even")
        keep = w > 0
        edges, weights = edges[keep], w[keep]
    elif model.variant == "knn":
        if not 1 <= model.k < n:
            raise DomainError(f"knn needs 1 <= k < n, got k={model.k}, n={n}")
        edges = _knn_edges(x, np.full(n, model.k))
    elif model.variant == "boolean":
        rng = np.random.default_rng(rng)
        if model.radius_law is None:
            radii = rng.uniform(0.0, model.rho, size=n)
        else:
            radii = np.asarray(model.radius_law(rng, n), dtype=float)
        if np.any(radii <= 0) or np.any(radii >= math.pi / 2):
            raise DomainError("boolean radii must lie in (0, pi/2)")
        edges = _boolean_edges(x, radii)
    else:
        rng = np.random.default_rng(rng)
        if model.count_law is not None:
            ks = np.asarray(model.count_law(rng, n), dtype=np.int64)
        elif model.count_law_name == "poisson":
            ks = rng.poisson(model.k, size=n)
        else:
            ks = np.full(n, model.k, dtype=np.int64)
        ks = np.clip(ks, 1, n - 1)
        edges = _knn_edges(x, ks)
    edges = np.ascontiguousarray(edges, dtype=np.int64).reshape(-1, 2)
    eps = float(model.effective_epsilon(scale_n if scale_n is not None else n))
    return Graph(nodes, edges, model, weights, eps, scale_n)


def is_connected(g: Graph) -> bool:
    if g.n == 1:
        return True
    if g.num_edges == 0:
        return False
    adj = coo_matrix((np.ones(g.num_edges), (g.edges[:, 0], g.edges[:, 1])),
                     shape=(g.n, g.n))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


def common_neighbors(g: Graph, i, j) -> int:
    """Number of nodes adjacent to both ``i`` and ``j``."""
    for v in (i, j):
        if not 0 <= v < g.n:
            raise DomainError(f"node id {v} out of range for n={g.n}")
    if i == j:
        raise DomainError("common_neighbors needs two distinct nodes")
    return int(np.intersect1d(g.neighbors(i), g.neighbors(j), assume_unique=True).size)
