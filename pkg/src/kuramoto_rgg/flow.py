"""Gradient-flow integration ``du/dt = -grad E(u)`` to a certified equilibrium.

Two explicit adaptive steppers are available:

``"rkc"``
    Second-order Runge-Kutta-Chebyshev (Sommeijer, Shampine & Verwer 1998).
    The stage count grows with ``sqrt(h * rho)`` so the step size is set by
    accuracy rather than by the stiff part of the graph Laplacian; this is
    the default because the slowest relaxation mode decays at a rate of
    order ``1 / n`` while the spectral radius stays of order one.
``"bs32"``
    Bogacki-Shampine 3(2) pair with FSAL, with steps capped at ``2 / rho``
    where ``rho`` bounds the Hessian spectrum. Adequate for small graphs.

Both accept a step only when the embedded error estimate passes and the
energy does not increase.
"""
from dataclasses import dataclass, field, replace
import math
from typing import List, Optional

import numpy as np

from .circle import signed_diff
from .energy import (EigenSolverError, energy, energy_gradient, gauge_fix,
                     hessian_min_eigenvalue, hessian_spectral_bound, pi_half_certificate)
from .graphs import Graph, is_connected
from .winding import IndexResult, consecutive_diffs, winding_index

METHODS = ("rkc", "bs32")
CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"


class FlowError(RuntimeError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True)
class FlowConfig:
    grad_tol: float = 1e-10
    max_time: float = 1e12
    max_steps: int = 10 ** 6
    dt_init: Optional[float] = None
    dt_max: float = 1e8
    safety: float = 0.8
    rtol: float = 1e-5
    atol: float = 1e-8
    method: str = "rkc"
    max_stages: int = 1000
    compute_eigenvalue: bool = False

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.dt_init is not None and not 0 < self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_init <= dt_max")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.safety < 1:
            raise ValueError("safety factor must lie in (0, 1)")
        if self.max_stages < 2:
            raise ValueError("max_stages must be at least 2")


@dataclass
class EquilibriumReport:
    final_state: np.ndarray
    final_energy: float
    grad_inf_norm: float
    index: IndexResult
    stable_pi_half: bool
    min_eigenvalue: Optional[float]
    steps: int
    simulated_time: float
    terminated: str
    rejected_steps: int = 0
    rhs_evals: int = 0
    connected: bool = True
    initial_index: Optional[int] = None
    index_changes: int = 0
    min_gap_along: float = math.pi
    sum_drift: float = 0.0
    descent_ok: bool = True
    eigen_note: Optional[str] = None
    energies: np.ndarray = field(default=None, repr=False)
    trace: Optional[List[tuple]] = field(default=None, repr=False)

    @property
    def converged(self):
        return self.terminated == CONVERGED

    @property
    def drift_rate(self):
        """Largest deviation of ``sum(u)`` per unit simulated time (time floored at 1)."""
        return self.sum_drift / max(self.simulated_time, 1.0)


def flow_rhs(g: Graph, u) -> np.ndarray:
    return -energy_gradient(g, u)


def descend_energy_check(energies) -> bool:
    """True iff the energies never increase by more than ``1e-12 * max(1, E)``."""
    e = np.asarray(energies, dtype=float)
    if e.size < 2:
        return True
    tol = 1e-12 * np.maximum(1.0, np.abs(e[:-1]))
    return bool(np.all(e[1:] <= e[:-1] + tol))


def _rkc_coefficients(s, damping=2.0 / 13.0):
    """Stage coefficients of the damped second-order RKC method with s stages."""
    w0 = 1.0 + damping / s ** 2
    T = np.zeros(s + 1)
    dT = np.zeros(s + 1)
    d2T = np.zeros(s + 1)
    T[0], T[1] = 1.0, w0
    dT[1] = 1.0
    for j in range(2, s + 1):
        T[j] = 2 * w0 * T[j - 1] - T[j - 2]
        dT[j] = 2 * T[j - 1] + 2 * w0 * dT[j - 1] - dT[j - 2]
        d2T[j] = 4 * dT[j - 1] + 2 * w0 * d2T[j - 1] - d2T[j - 2]
    w1 = dT[s] / d2T[s]
    b = np.zeros(s + 1)
    b[2:] = d2T[2:] / dT[2:] ** 2
    b[0] = b[1] = b[2]
    a = 1.0 - b * T
    mu_t = np.zeros(s + 1)
    mu = np.zeros(s + 1)
    nu = np.zeros(s + 1)
    gam_t = np.zeros(s + 1)
    mu_t[1] = b[1] * w1
    for j in range(2, s + 1):
        mu[j] = 2 * b[j] * w0 / b[j - 1]
        nu[j] = -b[j] / b[j - 2]
        mu_t[j] = 2 * b[j] * w1 / b[j - 1]
        gam_t[j] = -a[j - 1] * mu_t[j]
    beta = (w0 + 1.0) * d2T[s] / dT[s]
    return mu, nu, mu_t, gam_t, beta


class _Stepper:
    def __init__(self, g, cfg):
        self.g = g
        self.cfg = cfg
        self.rho = max(hessian_spectral_bound(g), 1e-300)
        self.evals = 0
        self._coef = {}

    def rhs(self, u):
        self.evals += 1
        return -energy_gradient(self.g, u)

    def max_dt(self):
        if self.cfg.method == "bs32":
            # inside the real stability interval (about 2.5) so stiff modes stay damped
            return min(self.cfg.dt_max, 2.0 / self.rho)
        beta = self._coefficients(self.cfg.max_stages)[4]
        return min(self.cfg.dt_max, 0.95 * beta / self.rho)

    def _coefficients(self, s):
        if s not in self._coef:
            self._coef[s] = _rkc_coefficients(s)
        return self._coef[s]

    def step(self, u, f0, h):
        """One attempted step; returns (u_new, f_new, error_vector)."""
        if self.cfg.method == "bs32":
            k1 = f0
            k2 = self.rhs(u + 0.5 * h * k1)
            k3 = self.rhs(u + 0.75 * h * k2)
            un = u + h * (2.0 / 9.0 * k1 + 1.0 / 3.0 * k2 + 4.0 / 9.0 * k3)
            k4 = self.rhs(un)
            err = h * (-5.0 / 72.0 * k1 + 1.0 / 12.0 * k2 + 1.0 / 9.0 * k3 - 0.125 * k4)
            return un, k4, err
        s = 2
        while s < self.cfg.max_stages and self._coefficients(s)[4] < h * self.rho:
            s = min(self.cfg.max_stages, max(s + 1, int(1.2 * s)))
        mu, nu, mu_t, gam_t, _ = self._coefficients(s)
        y_prev2 = u
        y_prev = u + mu_t[1] * h * f0
        for j in range(2, s + 1):
            y = ((1.0 - mu[j] - nu[j]) * u + mu[j] * y_prev + nu[j] * y_prev2
                 + mu_t[j] * h * self.rhs(y_prev) + gam_t[j] * h * f0)
            y_prev2, y_prev = y_prev, y
        fn = self.rhs(y_prev)
        err = 0.8 * (u - y_prev) + 0.4 * h * (f0 + fn)
        return y_prev, fn, err

    @property
    def order(self):
        return 2 if self.cfg.method == "rkc" else 3


def _finish(g, u, cfg, **kw):
    u = gauge_fix(u)
    grad = energy_gradient(g, u)
    gnorm = float(np.max(np.abs(grad)))
    eig, note = None, None
    if cfg.compute_eigenvalue:
        try:
            eig = hessian_min_eigenvalue(g, u)
        except EigenSolverError as exc:
            note = str(exc)
    return EquilibriumReport(
        final_state=u, final_energy=energy(g, u), grad_inf_norm=gnorm,
        index=winding_index(g.nodes, u), stable_pi_half=pi_half_certificate(g, u),
        min_eigenvalue=eig, eigen_note=note, **kw)


def integrate(g: Graph, u0, cfg: FlowConfig = FlowConfig(), trace=False) -> EquilibriumReport:
    """Follow the gradient flow from ``u0`` until ``|grad E|_inf < grad_tol``.

    The initial state is shifted to zero mean; the flow conserves the mean
    so the whole trajectory stays in the gauge-fixed subspace. Raises
    :class:`FlowError` if a non-finite state appears.
    """
    u = gauge_fix(np.array(u0, dtype=float))
    if u.shape != (g.n,) or not np.all(np.isfinite(u)):
        raise FlowError(f"bad initial state of shape {u.shape}")
    connected = is_connected(g)
    st = _Stepper(g, cfg)
    s0 = float(np.sum(u))
    e = energy(g, u)
    f = st.rhs(u)
    gnorm = float(np.max(np.abs(f)))
    energies = [e]
    rows = [(0, 0.0, e, gnorm)] if trace else None

    idx0 = winding_index(g.nodes, u).value
    prev_idx, changes = idx0, 0
    min_gap = float(np.min(np.pi - np.abs(consecutive_diffs(u))))
    drift = 0.0

    t, steps, rejected = 0.0, 0, 0
    hmax = st.max_dt()
    h = cfg.dt_init if cfg.dt_init is not None else min(hmax, 1.0 / st.rho)
    status = CONVERGED if gnorm < cfg.grad_tol else None
    while status is None:
        if steps + rejected >= cfg.max_steps or t >= cfg.max_time:
            status = BUDGET_EXHAUSTED
            break
        h = min(h, hmax, cfg.max_time - t)
        un, fn, err = st.step(u, f, h)
        if not (np.all(np.isfinite(un)) and np.all(np.isfinite(fn))):
            raise FlowError(f"non-finite state at t={t}, h={h}, step {steps}")
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(u), np.abs(un))
        errn = float(np.sqrt(np.mean((err / scale) ** 2)))
        en = energy(g, un) if errn <= 1.0 else math.inf
        if errn > 1.0 or en > e + 1e-12 * max(1.0, e):
            rejected += 1
            if errn > 1.0:
                h *= max(0.1, cfg.safety * errn ** (-1.0 / (st.order + 1)))
            else:
                h *= 0.5
            continue
        t += h
        steps += 1
        u, f, e = un, fn, en
        gnorm = float(np.max(np.abs(f)))
        energies.append(e)
        if trace:
            rows.append((steps, t, e, gnorm))
        drift = max(drift, abs(float(np.sum(u)) - s0))
        d = consecutive_diffs(u)
        min_gap = min(min_gap, float(np.min(np.pi - np.abs(d))))
        cur = winding_index(None, u).value
        if cur != prev_idx:
            changes += 1
            prev_idx = cur
        if gnorm < cfg.grad_tol:
            status = CONVERGED
            break
        fac = cfg.safety * errn ** (-1.0 / (st.order + 1)) if errn > 0 else 10.0
        h *= min(10.0, max(0.2, fac))

    energies = np.asarray(energies)
    return _finish(
        g, u, cfg, steps=steps, simulated_time=t, terminated=status,
        rejected_steps=rejected, rhs_evals=st.evals, connected=connected,
        initial_index=idx0, index_changes=changes, min_gap_along=min_gap,
        sum_drift=drift, descent_ok=descend_energy_check(energies),
        energies=energies, trace=rows)


def state_distance(a, b) -> float:
    """Largest circular difference between two phase vectors."""
    return float(np.max(np.abs(signed_diff(np.asarray(a), np.asarray(b)))))


def perturbation_restart(g: Graph, report: EquilibriumReport, cfg: FlowConfig = FlowConfig(),
                         rng=None, amplitude=1e-8):
    """Kick a converged state with mean-zero noise and flow again.

    Returns ``(new_report, distance)`` where ``distance`` compares the two
    gauge-fixed equilibria.
    """
    rng = np.random.default_rng(rng)
    kick = rng.uniform(-amplitude, amplitude, size=g.n)
    kick -= kick.mean()
    again = integrate(g, report.final_state + kick, replace(cfg, compute_eigenvalue=False))
    return again, state_distance(again.final_state, report.final_state)
