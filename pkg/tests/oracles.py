"""Independent reference computations used by the tests.

Everything here is written directly from the defining formulas with plain
loops or dense linear algebra and shares no code with the package beyond
the Graph/NodeSet containers.
"""
import math

import numpy as np


def arc_distance(a, b):
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def rgg_edges_bruteforce(angles, eps):
    n = len(angles)
    return {(i, j) for i in range(n) for j in range(i + 1, n)
            if arc_distance(angles[i], angles[j]) < eps}


def knn_edges_bruteforce(angles, k):
    n = len(angles)
    out = set()
    for i in range(n):
        others = sorted((arc_distance(angles[i], angles[j]), j) for j in range(n) if j != i)
        for _, j in others[:k]:
            out.add((min(i, j), max(i, j)))
    return out


def adjacency(g):
    a = np.zeros((g.n, g.n))
    w = g.weights if g.weights is not None else np.ones(g.num_edges)
    for (i, j), wij in zip(g.edges, w):
        a[i, j] = a[j, i] = wij
    return a


def energy_double_sum(g, u):
    """pi/(2 n^2 eps^3) * sum over ordered pairs of w_ij (1 - cos(u_j - u_i))."""
    a = adjacency(g)
    n = g.scale_n if g.scale_n is not None else g.n
    total = 0.0
    for i in range(g.n):
        for j in range(g.n):
            if a[i, j]:
                total += a[i, j] * (1.0 - math.cos(u[j] - u[i]))
    return math.pi / (2 * n ** 2 * g.epsilon ** 3) * total


def finite_difference_gradient(f, u, h=1e-6):
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    for i in range(u.size):
        up, dn = u.copy(), u.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (f(up) - f(dn)) / (2 * h)
    return out


def dense_hessian(g, u):
    a = adjacency(g)
    c = math.pi / (g.n ** 2 * g.epsilon ** 3)
    cw = c * a * np.cos(u[None, :] - u[:, None])
    return np.diag(cw.sum(axis=1)) - cw


def dense_min_eigenvalue(g, u):
    """Smallest eigenvalue of the Hessian restricted to sum-zero vectors."""
    h = dense_hessian(g, u)
    n = g.n
    # orthonormal basis of the complement of (1, ..., 1)
    q, _ = np.linalg.qr(np.column_stack([np.ones(n), np.eye(n)[:, : n - 1]]))
    basis = q[:, 1:]
    return float(np.linalg.eigvalsh(basis.T @ h @ basis).min())


def wilson(successes, trials, z=1.959963984540054):
    p = successes / trials
    centre = p + z * z / (2 * trials)
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials ** 2))
    return (centre - half) / (1 + z * z / trials), (centre + half) / (1 + z * z / trials)


def winding_by_unwrapping(u):
    """Winding count from numpy's phase unwrapping of the closed loop."""
    loop = np.unwrap(np.append(u, u[0]))
    return (loop[-1] - loop[0]) / (2 * math.pi)
