"""Seeded Monte Carlo campaigns over (n, eps, q) cells.

Every trial draws its randomness from a 64-bit seed derived from
``(master_seed, cell index, trial index)`` through :class:`numpy.random.SeedSequence`,
so a trial can be replayed from its seed alone and the output of a
campaign does not depend on how trials are spread over worker processes.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import hashlib
import math
import time
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import binomtest

from .circle import DomainError, normalize
from .energy import energy, max_twist, twisted_ansatz
from .flow import FlowConfig, FlowError, integrate
from .graphs import GraphModel, build_graph, is_connected, sample_nodes
from .winding import WindingResidualError

MODES = ("existence", "convergence", "boundary", "q_sweep", "variance")
CLI_VARIANTS = {"rgg": "rgg", "knn": "knn", "boolean": "boolean",
                "random-nn": "random_nn", "kernel": "weighted_kernel"}


@dataclass(frozen=True)
class SmoothPhase:
    """Phase profile ``q x + sum_m (a_m cos(m x) + b_m sin(m x))`` on [0, 2*pi).

    ``cos`` and ``sin`` hold the coefficients for m = 1, 2, ...
    """

    q: int = 0
    cos: Tuple[float, ...] = ()
    sin: Tuple[float, ...] = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = self.q * x
        for m, a in enumerate(self.cos, start=1):
            u = u + a * np.cos(m * x)
        for m, b in enumerate(self.sin, start=1):
            u = u + b * np.sin(m * x)
        return normalize(u)

    def continuum_energy(self) -> float:
        """``(1 / 12 pi) * integral of u'(x)^2`` over one turn, in closed form."""
        modes = sum(m * m * a * a for m, a in enumerate(self.cos, start=1))
        modes += sum(m * m * b * b for m, b in enumerate(self.sin, start=1))
        return self.q ** 2 / 6.0 + modes / 12.0


def twisted_energy_expectation(n, eps, q) -> float:
    """Exact mean of the rgg energy of the q-twisted ansatz at finite (n, eps).

    Each of the n(n-1) ordered pairs is an edge with probability eps/pi and,
    given that, the position offset is uniform on (-eps, eps).
    """
    if q == 0:
        return 0.0
    return (n - 1) / n / (2.0 * eps ** 2) * (1.0 - math.sin(q * eps) / (q * eps))


@dataclass(frozen=True)
class Cell:
    index: int
    n: int
    epsilon: float
    q: int


@dataclass(frozen=True)
class CampaignConfig:
    mode: str = "existence"
    n_values: Tuple[int, ...] = (2000,)
    eps_power: Optional[float] = 0.7
    eps_values: Optional[Tuple[float, ...]] = None
    eps_scale: float = 1.0
    q_values: Tuple[int, ...] = (1,)
    trials: int = 100
    variant: str = "rgg"
    count_law: str = "constant"
    sampling_mode: str = "fixed_n"
    master_seed: int = 0
    fourier_cos: Tuple[float, ...] = ()
    fourier_sin: Tuple[float, ...] = ()
    store_states: bool = False
    flow: FlowConfig = field(default_factory=FlowConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.variant not in CLI_VARIANTS.values():
            raise DomainError(f"unknown variant {self.variant!r}")
        if (self.eps_power is None) == (self.eps_values is None):
            raise DomainError("give exactly one of eps_power and eps_values")
        if not self.n_values or not self.q_values:
            raise DomainError("n_values and q_values must be nonempty")
        if self.trials < 0:
            raise DomainError("trials must be nonnegative")
        if not 0 <= self.master_seed < 2 ** 64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        for n in self.n_values:
            for q in self.q_values:
                if abs(q) > max_twist(n):
                    raise DomainError(f"|q|={abs(q)} exceeds floor((n-1)/2) for n={n}")

    def epsilons(self, n) -> List[float]:
        if self.eps_values is not None:
            return [float(e) for e in self.eps_values]
        return [self.eps_scale * n ** (-self.eps_power)]

    def cells(self) -> List[Cell]:
        out = []
        for n in self.n_values:
            for eps in self.epsilons(n):
                for q in self.q_values:
                    out.append(Cell(len(out), int(n), float(eps), int(q)))
        return out

    def descriptor(self, q) -> SmoothPhase:
        return SmoothPhase(q, tuple(self.fourier_cos), tuple(self.fourier_sin))

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        flow = FlowConfig(**d.pop("flow", {}))
        for k in ("n_values", "q_values", "eps_values", "fourier_cos", "fourier_sin"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(flow=flow, **d)


def regime_warnings(cfg: CampaignConfig) -> List[str]:
    """Parameter choices that leave the sparse-but-connected regime."""
    out = []
    if cfg.eps_power is not None and not 0.5 < cfg.eps_power < 1.0:
        out.append(f"eps power a={cfg.eps_power} outside (1/2, 1)")
    if cfg.eps_values is not None:
        for n in cfg.n_values:
            for eps in cfg.eps_values:
                if n * eps ** 2 > 1.0:
                    out.append(f"n*eps^2={n * eps ** 2:.3g} > 1 at n={n}, eps={eps}")
                if n * eps / math.log(n) < 3.0:
                    out.append(f"n*eps/log n={n * eps / math.log(n):.3g} < 3 at n={n}, eps={eps}")
    return out


def q_threshold(n, eps) -> float:
    """Twist below which the boundary barrier beats the ansatz energy: ``1 / (2 sqrt(n) eps)``."""
    return 1.0 / (2.0 * math.sqrt(n) * eps)


def model_for(cfg: CampaignConfig, n, eps) -> GraphModel:
    """Graph rule for a cell; k-nn style families take k from the matching rgg degree."""
    if cfg.variant == "rgg":
        return GraphModel.rgg(eps)
    if cfg.variant == "weighted_kernel":
        return GraphModel.weighted_kernel(eps)
    if cfg.variant == "boolean":
        return GraphModel.boolean(rho=eps)
    k = max(1, int(round(n * eps / math.pi)))
    if cfg.variant == "knn":
        return GraphModel.knn(k)
    return GraphModel.random_nn(k, law=cfg.count_law)


def trial_seed(master_seed, cell_index, trial_index) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(cell_index, trial_index))
    return int(ss.generate_state(1, np.uint64)[0])


def _sample_graph(cfg, cell, seed):
    rng = np.random.default_rng(seed)
    nodes = sample_nodes(cell.n, cfg.sampling_mode, rng)
    scale_n = cell.n if cfg.sampling_mode == "poissonized" else None
    g = build_graph(nodes, model_for(cfg, cell.n, cell.epsilon), rng, scale_n=scale_n)
    return g


def state_digest(u) -> str:
    return hashlib.sha256(np.ascontiguousarray(u, dtype="<f8").tobytes()).hexdigest()


@dataclass
class TrialRecord:
    cell: int
    trial: int
    seed: int
    n: int
    epsilon: float
    q: int
    connected: bool
    skipped: bool
    success: bool
    ansatz_energy: Optional[float] = None
    report: Optional[object] = None
    error: Optional[str] = None
    wall_time: float = 0.0

    kind = "trial"

    def to_dict(self, store_state=False):
        d = {"kind": self.kind, "cell": self.cell, "trial": self.trial, "seed": self.seed,
             "n": self.n, "epsilon": self.epsilon, "q": self.q, "connected": self.connected,
             "skipped": self.skipped, "success": self.success,
             "ansatz_energy": self.ansatz_energy, "error": self.error, "report": None}
        r = self.report
        if r is not None:
            d["report"] = {
                "terminated": r.terminated, "final_energy": r.final_energy,
                "grad_inf_norm": r.grad_inf_norm, "index": r.index.to_dict(),
                "stable_pi_half": r.stable_pi_half, "min_eigenvalue": r.min_eigenvalue,
                "steps": r.steps, "rejected_steps": r.rejected_steps,
                "rhs_evals": r.rhs_evals, "simulated_time": r.simulated_time,
                "initial_index": r.initial_index, "index_changes": r.index_changes,
                "min_gap_along": r.min_gap_along, "sum_drift": r.sum_drift,
                "descent_ok": r.descent_ok, "state_sha256": state_digest(r.final_state),
            }
            if store_state:
                d["report"]["final_state"] = [float(v) for v in r.final_state]
        return d


@dataclass
class EnergySample:
    cell: int
    trial: int
    seed: int
    n: int
    count: int
    epsilon: float
    q: int
    connected: bool
    energy: float
    wall_time: float = 0.0

    kind = "energy_sample"

    def to_dict(self, store_state=False):
        return {"kind": self.kind, "cell": self.cell, "trial": self.trial, "seed": self.seed,
                "n": self.n, "count": self.count, "epsilon": self.epsilon, "q": self.q,
                "connected": self.connected, "energy": self.energy}


@dataclass
class BoundaryRecord:
    cell: int
    trial: int
    seed: int
    n: int
    epsilon: float
    q: int
    connected: bool
    probes: int
    min_probe_energy: Optional[float]
    floor: float
    violations: int
    min_margin: Optional[float]
    ansatz_energy: float
    wall_time: float = 0.0

    kind = "boundary"

    @property
    def above_floor(self):
        return self.min_probe_energy is None or self.min_probe_energy >= self.floor

    def to_dict(self, store_state=False):
        return {"kind": self.kind, "cell": self.cell, "trial": self.trial, "seed": self.seed,
                "n": self.n, "epsilon": self.epsilon, "q": self.q, "connected": self.connected,
                "probes": self.probes, "min_probe_energy": self.min_probe_energy,
                "floor": self.floor, "violations": self.violations,
                "min_margin": self.min_margin, "ansatz_energy": self.ansatz_energy}


def run_trial(cfg: CampaignConfig, cell: Cell, seed: int, trial_index: int = 0) -> TrialRecord:
    """Sample a graph, flow from the q-twisted ansatz and grade the endpoint.

    Disconnected graphs are recorded as skipped. A trial succeeds when the
    flow converges to a state of winding index q whose phase gaps are all
    below pi/2.
    """
    t0 = time.perf_counter()
    g = _sample_graph(cfg, cell, seed)
    rec = TrialRecord(cell.index, trial_index, seed, g.n, cell.epsilon, cell.q,
                      connected=is_connected(g), skipped=False, success=False)
    try:
        u0 = twisted_ansatz(g.nodes, cell.q)
        rec.ansatz_energy = energy(g, u0)
        if not rec.connected:
            rec.skipped = True
        else:
            rep = integrate(g, u0, cfg.flow)
            rec.report = rep
            rec.success = bool(rep.converged and rep.index.value == cell.q and rep.stable_pi_half)
    except (FlowError, DomainError, WindingResidualError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - t0
    return rec


def energy_sample(cfg: CampaignConfig, cell: Cell, seed: int, trial_index: int = 0) -> EnergySample:
    """Energy of the campaign's smooth phase profile on one sampled graph."""
    t0 = time.perf_counter()
    g = _sample_graph(cfg, cell, seed)
    u = cfg.descriptor(cell.q)(g.nodes.angles)
    e = energy(g, u)
    return EnergySample(cell.index, trial_index, seed, cell.n, g.n, cell.epsilon, cell.q,
                        is_connected(g), e, time.perf_counter() - t0)


def probe_energies(g, u):
    """Energies of all boundary probes built from ``u``, plus their floors.

    Probe k flips node k antipodal to node k-1; only pairs (k-1, k) that are
    adjacent are probed. Returns ``(ks, energies, floors)`` where
    ``floors[k] = pi N_{k,k-1} / (2 n^2 eps^3)``. Energies are updated
    locally from the energy of ``u``.
    """
    n = g.n
    ks = np.array([k for k in range(n) if g.has_edge(k, (k - 1) % n)], dtype=np.int64)
    if ks.size == 0:
        return ks, np.empty(0), np.empty(0)
    e0 = energy(g, u)
    flipped = normalize(u[(ks - 1) % n] + math.pi)
    w = g.edge_weights
    deltas = np.zeros(ks.size)
    common = np.zeros(ks.size)
    i, j = g.edges[:, 0], g.edges[:, 1]
    pos = np.full(n, -1)
    pos[ks] = np.arange(ks.size)
    for a, b in ((i, j), (j, i)):
        sel = pos[a] >= 0
        p = pos[a[sel]]
        new = 2.0 * np.sin(0.5 * (u[b[sel]] - flipped[p])) ** 2
        old = 2.0 * np.sin(0.5 * (u[b[sel]] - u[a[sel]])) ** 2
        deltas += np.bincount(p, weights=w[sel] * (new - old), minlength=ks.size)
    for t, k in enumerate(ks):
        common[t] = np.intersect1d(g.neighbors(k), g.neighbors((k - 1) % n),
                                   assume_unique=True).size
    energies = e0 + 2.0 * g.energy_scale * deltas
    return ks, energies, g.energy_scale * common


def boundary_trial(cfg: CampaignConfig, cell: Cell, seed: int, trial_index: int = 0) -> BoundaryRecord:
    t0 = time.perf_counter()
    g = _sample_graph(cfg, cell, seed)
    u = twisted_ansatz(g.nodes, cell.q)
    ks, energies, floors = probe_energies(g, u)
    floor = 1.0 / (8.0 * cell.n * cell.epsilon ** 2)
    margin = energies - floors
    return BoundaryRecord(
        cell.index, trial_index, seed, g.n, cell.epsilon, cell.q, is_connected(g),
        probes=int(ks.size),
        min_probe_energy=float(energies.min()) if ks.size else None,
        floor=floor, violations=int(np.sum(margin < 0)),
        min_margin=float(margin.min()) if ks.size else None,
        ansatz_energy=energy(g, u), wall_time=time.perf_counter() - t0)


_RUNNERS = {"existence": run_trial, "q_sweep": run_trial, "convergence": energy_sample,
            "variance": energy_sample, "boundary": boundary_trial}


def _run_task(args):
    cfg, cell, trial_index, seed = args
    return _RUNNERS[cfg.mode](cfg, cell, seed, trial_index)


def run_records(cfg: CampaignConfig, workers: int = 1) -> list:
    """Run every trial of every cell; records come back in (cell, trial) order."""
    tasks = []
    for cell in cfg.cells():
        for t in range(cfg.trials):
            tasks.append((cfg, cell, t, trial_seed(cfg.master_seed, cell.index, t)))
    seeds = [task[3] for task in tasks]
    if len(set(seeds)) != len(seeds):
        raise RuntimeError("per-trial seed collision")
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def wilson_interval(successes, trials, confidence=0.95):
    if trials == 0:
        return None, None
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else None


@dataclass
class CampaignResult:
    config: CampaignConfig
    records: list
    summary: List[dict]
    table: List[dict]


SUMMARY_COLUMNS = ("n", "epsilon", "q", "trials", "skips", "successes", "rate",
                   "ci_low", "ci_high", "mean_energy", "mean_ansatz_energy")


def summarize_trials(cfg, records) -> List[dict]:
    rows = []
    for cell, recs in _cell_samples(cfg, records):
        ran = [r for r in recs if not r.skipped]
        ok = sum(r.success for r in ran)
        lo, hi = wilson_interval(ok, len(ran))
        finals = [r.report.final_energy for r in ran if r.report is not None]
        ansatz = [r.ansatz_energy for r in recs if r.ansatz_energy is not None]
        rows.append({"n": cell.n, "epsilon": cell.epsilon, "q": cell.q, "trials": len(recs),
                     "skips": len(recs) - len(ran), "successes": ok,
                     "rate": ok / len(ran) if ran else None, "ci_low": lo, "ci_high": hi,
                     "mean_energy": _mean(finals), "mean_ansatz_energy": _mean(ansatz)})
    return rows


def _cell_samples(cfg, records):
    """Cells paired with their records; cells without records are left out."""
    for cell in cfg.cells():
        recs = [r for r in records if r.cell == cell.index]
        if recs:
            yield cell, recs


def _energy_summary(cfg, records):
    rows = []
    for cell, recs in _cell_samples(cfg, records):
        e = [r.energy for r in recs]
        rows.append({"n": cell.n, "epsilon": cell.epsilon, "q": cell.q, "trials": len(recs),
                     "skips": 0, "successes": None, "rate": None, "ci_low": None,
                     "ci_high": None, "mean_energy": _mean(e), "mean_ansatz_energy": _mean(e)})
    return rows


def convergence_table(cfg, records) -> List[dict]:
    rows = []
    for cell, recs in _cell_samples(cfg, records):
        e = np.array([r.energy for r in recs])
        rows.append({"n": cell.n, "epsilon": cell.epsilon, "q": cell.q, "samples": e.size,
                     "mean_energy": float(e.mean()) if e.size else None,
                     "std_energy": float(e.std(ddof=1)) if e.size > 1 else None,
                     "continuum": cfg.descriptor(cell.q).continuum_energy()})
    return rows


def variance_table(cfg, records) -> List[dict]:
    rows = []
    for cell, recs in _cell_samples(cfg, records):
        e = np.array([r.energy for r in recs])
        rows.append({"n": cell.n, "epsilon": cell.epsilon, "q": cell.q, "samples": e.size,
                     "variance": float(e.var(ddof=1)) if e.size > 1 else None})
    return rows


def boundary_table(cfg, records) -> List[dict]:
    rows = []
    for cell, recs in _cell_samples(cfg, records):
        mins = [r.min_probe_energy for r in recs if r.min_probe_energy is not None]
        rows.append({"n": cell.n, "epsilon": cell.epsilon, "q": cell.q, "graphs": len(recs),
                     "min_probe_energy": min(mins) if mins else None,
                     "floor": 1.0 / (8.0 * cell.n * cell.epsilon ** 2),
                     "graphs_above_floor": sum(r.above_floor for r in recs),
                     "exact_violations": sum(r.violations for r in recs)})
    return rows


def _boundary_summary(cfg, records):
    rows = []
    for cell, recs in _cell_samples(cfg, records):
        ok = sum(r.above_floor for r in recs)
        lo, hi = wilson_interval(ok, len(recs))
        mins = [r.min_probe_energy for r in recs if r.min_probe_energy is not None]
        rows.append({"n": cell.n, "epsilon": cell.epsilon, "q": cell.q, "trials": len(recs),
                     "skips": 0, "successes": ok, "rate": ok / len(recs) if recs else None,
                     "ci_low": lo, "ci_high": hi, "mean_energy": _mean(mins),
                     "mean_ansatz_energy": _mean([r.ansatz_energy for r in recs])})
    return rows


def q_sweep_table(cfg, records) -> List[dict]:
    rows = []
    for row in summarize_trials(cfg, records):
        rows.append({"n": row["n"], "epsilon": row["epsilon"], "q": row["q"],
                     "rate": row["rate"], "threshold": q_threshold(row["n"], row["epsilon"]),
                     "below_threshold": abs(row["q"]) < q_threshold(row["n"], row["epsilon"])})
    return rows


def _check_mode(cfg, *modes):
    if cfg.mode not in modes:
        raise DomainError(f"campaign expects mode in {modes}, got {cfg.mode!r}")


def existence_campaign(cfg: CampaignConfig, workers: int = 1) -> CampaignResult:
    _check_mode(cfg, "existence")
    recs = run_records(cfg, workers)
    summary = summarize_trials(cfg, recs)
    return CampaignResult(cfg, recs, summary, summary)


def q_sweep_campaign(cfg: CampaignConfig, workers: int = 1) -> CampaignResult:
    _check_mode(cfg, "q_sweep")
    recs = run_records(cfg, workers)
    return CampaignResult(cfg, recs, summarize_trials(cfg, recs), q_sweep_table(cfg, recs))


def convergence_campaign(cfg: CampaignConfig, workers: int = 1) -> CampaignResult:
    _check_mode(cfg, "convergence")
    recs = run_records(cfg, workers)
    return CampaignResult(cfg, recs, _energy_summary(cfg, recs), convergence_table(cfg, recs))


def variance_decay_campaign(cfg: CampaignConfig, workers: int = 1) -> CampaignResult:
    _check_mode(cfg, "variance")
    recs = run_records(cfg, workers)
    return CampaignResult(cfg, recs, _energy_summary(cfg, recs), variance_table(cfg, recs))


def boundary_campaign(cfg: CampaignConfig, workers: int = 1) -> CampaignResult:
    _check_mode(cfg, "boundary")
    recs = run_records(cfg, workers)
    return CampaignResult(cfg, recs, _boundary_summary(cfg, recs), boundary_table(cfg, recs))


CAMPAIGNS = {"existence": existence_campaign, "q_sweep": q_sweep_campaign,
             "convergence": convergence_campaign, "variance": variance_decay_campaign,
             "boundary": boundary_campaign}


def run_campaign(cfg: CampaignConfig, workers: int = 1) -> CampaignResult:
    return CAMPAIGNS[cfg.mode](cfg, workers)
