import math

import numpy as np
import pytest
from scipy.integrate import quad

from kuramoto_rgg.circle import DomainError
from kuramoto_rgg.energy import energy, twisted_ansatz
from kuramoto_rgg.experiments import (CampaignConfig, Cell, SmoothPhase, _sample_graph,
                                      boundary_campaign,
                                      convergence_campaign, energy_sample, existence_campaign,
                                      model_for, probe_energies, q_sweep_campaign, q_threshold,
                                      regime_warnings, run_records, run_trial, trial_seed,
                                      twisted_energy_expectation, variance_decay_campaign,
                                      wilson_interval)
from kuramoto_rgg.graphs import GraphModel, common_neighbors
from kuramoto_rgg.winding import boundary_probe

from oracles import wilson

PI = math.pi


def small(mode, **kw):
    base = dict(mode=mode, n_values=(300,), eps_power=0.7, eps_scale=2 * PI, q_values=(0, 1),
                trials=4, master_seed=5)
    base.update(kw)
    return CampaignConfig(**base)


def test_constant_twist_trial_succeeds_immediately():
    cfg = CampaignConfig(n_values=(100,), eps_power=None, eps_values=(0.3,), q_values=(0,))
    recs = [run_trial(cfg, Cell(0, 100, 0.3, 0), seed) for seed in range(20)]
    ran = [r for r in recs if r.connected]
    # at n = 100, eps = 0.3 about half of the draws have a gap wider than eps
    assert len(ran) >= 5
    assert all(r.success and r.report.steps == 0 and r.report.final_energy == 0.0 for r in ran)
    assert all(r.skipped for r in recs if not r.connected)


def test_trial_is_reproducible_from_its_seed():
    cfg = CampaignConfig(n_values=(2000,), q_values=(1,))
    cell = Cell(0, 2000, 2000 ** -0.7, 1)
    a, b = run_trial(cfg, cell, 42), run_trial(cfg, cell, 42)
    assert a.to_dict() == b.to_dict()
    cfg = small("existence")
    cell = cfg.cells()[1]
    flowed = 0
    for seed in range(42, 52):
        a, b = run_trial(cfg, cell, seed), run_trial(cfg, cell, seed)
        assert a.to_dict() == b.to_dict()
        if a.report is not None:
            flowed += 1
            assert np.array_equal(a.report.final_state, b.report.final_state)
    assert flowed > 0


def test_sparse_small_graph_is_skipped():
    cfg = CampaignConfig(n_values=(10,), eps_power=None, eps_values=(0.01,), q_values=(1,))
    rec = run_trial(cfg, Cell(0, 10, 0.01, 1), 3)
    assert rec.skipped and not rec.connected and not rec.success and rec.report is None


def test_config_validation():
    with pytest.raises(DomainError):
        CampaignConfig(n_values=(100,), q_values=(60,))
    with pytest.raises(DomainError):
        CampaignConfig(eps_values=(0.1,))
    with pytest.raises(DomainError):
        CampaignConfig(mode="plot")
    with pytest.raises(DomainError):
        CampaignConfig(variant="lattice")


def test_regime_warnings():
    assert regime_warnings(CampaignConfig()) == []
    assert regime_warnings(CampaignConfig(eps_power=0.4))
    assert regime_warnings(CampaignConfig(eps_power=1.0))
    assert regime_warnings(CampaignConfig(n_values=(1000,), eps_power=None, eps_values=(0.05,)))
    assert regime_warnings(CampaignConfig(n_values=(1000,), eps_power=None, eps_values=(0.01,)))
    assert not regime_warnings(CampaignConfig(n_values=(1000,), eps_power=None, eps_values=(0.03,)))


def test_seeds_are_distinct_and_stable():
    seeds = {trial_seed(7, c, t) for c in range(20) for t in range(200)}
    assert len(seeds) == 4000
    assert trial_seed(7, 3, 4) == trial_seed(7, 3, 4)
    assert trial_seed(7, 3, 4) != trial_seed(8, 3, 4)


def test_wilson_interval_matches_formula():
    for k, n in ((0, 10), (9, 10), (90, 100), (100, 100), (37, 51)):
        lo, hi = wilson_interval(k, n)
        ref = wilson(k, n)
        assert lo == pytest.approx(ref[0], abs=1e-12) and hi == pytest.approx(ref[1], abs=1e-12)
    assert wilson_interval(0, 0) == (None, None)


def test_existence_summary_counts():
    res = existence_campaign(small("existence"))
    for row in res.summary:
        assert row["trials"] == 4
        ran = row["trials"] - row["skips"]
        assert 0 <= row["successes"] <= ran
        if ran:
            assert 0 <= row["ci_low"] <= row["rate"] <= row["ci_high"] <= 1
        if row["q"] == 0 and ran:
            assert row["rate"] == 1.0
    assert [(r.cell, r.trial) for r in res.records] == [(c, t) for c in range(2) for t in range(4)]


def test_records_do_not_depend_on_workers():
    cfg = small("existence", trials=3)
    one = [r.to_dict() for r in run_records(cfg, workers=1)]
    two = [r.to_dict() for r in run_records(cfg, workers=2)]
    assert one == two


def test_continuum_values():
    assert SmoothPhase(1).continuum_energy() == pytest.approx(1 / 6)
    assert SmoothPhase(2).continuum_energy() == pytest.approx(2 / 3)
    assert SmoothPhase(0).continuum_energy() == 0.0
    u = SmoothPhase(1, cos=(0.3, 0.0, 0.1), sin=(0.0, -0.2))

    def deriv_sq(x):
        d = 1 - 0.3 * math.sin(x) - 0.3 * math.sin(3 * x) - 0.4 * math.cos(2 * x)
        return d * d

    assert u.continuum_energy() == pytest.approx(quad(deriv_sq, 0, 2 * PI)[0] / (12 * PI), rel=1e-10)


def test_smooth_phase_values():
    u = SmoothPhase(2, cos=(0.5,))
    x = np.array([0.0, 1.0, 4.0])
    assert np.allclose(np.cos(u(x)), np.cos(2 * x + 0.5 * np.cos(x)))


def test_twisted_energy_expectation_against_monte_carlo():
    n, eps, q = 1000, 0.05, 2
    cfg = CampaignConfig(mode="convergence", n_values=(n,), eps_power=None, eps_values=(eps,),
                         q_values=(q,), trials=200, master_seed=3)
    samples = [r.energy for r in run_records(cfg)]
    mean, se = np.mean(samples), np.std(samples, ddof=1) / math.sqrt(len(samples))
    assert abs(mean - twisted_energy_expectation(n, eps, q)) < 4 * se
    # small eps limit is q^2/12
    assert twisted_energy_expectation(10 ** 9, 1e-5, 3) == pytest.approx(9 / 12, rel=1e-6)


def test_convergence_and_variance_tables():
    cfg = small("convergence", q_values=(0, 1), trials=5)
    res = convergence_campaign(cfg)
    rows = {r["q"]: r for r in res.table}
    assert rows[0]["mean_energy"] == 0.0 and rows[0]["continuum"] == 0.0
    assert rows[1]["continuum"] == pytest.approx(1 / 6)
    res = variance_decay_campaign(small("variance", q_values=(0, 1), trials=5))
    rows = {r["q"]: r for r in res.table}
    assert rows[0]["variance"] == 0.0 and rows[1]["variance"] > 0
    res = variance_decay_campaign(small("variance", q_values=(1,), trials=1))
    assert res.table[0]["variance"] is None


def test_probe_energies_match_direct_evaluation():
    cfg = small("boundary")
    g = _sample_graph(cfg, Cell(0, 300, cfg.epsilons(300)[0], 1), 9)
    ks, energies, floors = probe_energies(g, twisted_ansatz(g.nodes, 1))
    assert ks.size > 0
    for k, e, f in zip(ks, energies, floors):
        direct = energy(g, boundary_probe(g.nodes, 1, int(k)))
        assert e == pytest.approx(direct, rel=1e-10)
        assert f == g.energy_scale * common_neighbors(g, int(k), int(k) - 1 if k else g.n - 1)


def test_boundary_campaign_exact_bound_and_empty_probes():
    res = boundary_campaign(small("boundary", q_values=(1,)))
    assert all(r.violations == 0 for r in res.records)
    cfg = CampaignConfig(mode="boundary", n_values=(50,), eps_power=None, eps_values=(1e-4,),
                         q_values=(1,), trials=2)
    res = boundary_campaign(cfg)
    assert all(r.probes == 0 and r.min_probe_energy is None and r.above_floor for r in res.records)


def test_q_threshold_arithmetic():
    n = 2000
    thr = q_threshold(n, n ** -0.7)
    assert thr == pytest.approx(0.5 * n ** 0.2, rel=1e-14)
    assert thr == pytest.approx(2.2865, abs=1e-4)
    assert [q for q in range(6) if q < thr] == [0, 1, 2]


def test_q_sweep_table():
    res = q_sweep_campaign(small("q_sweep", q_values=(0, 1, 3), trials=2))
    assert [r["q"] for r in res.table] == [0, 1, 3]
    assert all(r["threshold"] == pytest.approx(q_threshold(300, 2 * PI * 300 ** -0.7)) for r in res.table)


def test_mode_mismatch_rejected():
    with pytest.raises(DomainError):
        existence_campaign(small("boundary"))


@pytest.mark.parametrize("variant", ["knn", "boolean", "random_nn", "weighted_kernel"])
def test_variants_run(variant):
    cfg = small("existence", variant=variant, q_values=(1,), trials=2)
    res = existence_campaign(cfg)
    assert len(res.records) == 2
    assert all(r.error is None for r in res.records)


def test_model_for_matches_rgg_degree():
    cfg = small("existence", variant="knn")
    eps = 0.05
    assert model_for(cfg, 1000, eps) == GraphModel.knn(round(1000 * eps / PI))


def test_poissonized_sampling_keeps_nominal_scale():
    cfg = small("convergence", sampling_mode="poissonized", q_values=(1,), trials=3)
    recs = run_records(cfg)
    assert any(r.count != 300 for r in recs)
    g = _sample_graph(cfg, cfg.cells()[0], recs[0].seed)
    assert g.energy_scale == pytest.approx(PI / (2 * 300 ** 2 * cfg.epsilons(300)[0] ** 3))


def test_energy_sample_record():
    cfg = small("convergence", q_values=(1,))
    rec = energy_sample(cfg, cfg.cells()[0], 11)
    assert rec.energy > 0 and rec.n == 300
