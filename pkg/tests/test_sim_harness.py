import json
import math
from fractions import Fraction as Fr

import pytest

from mdconsensus.sim_harness import (
    CSV_HEADER,
    AttackMode,
    ExperimentConfig,
    Scenario,
    coalition_size,
    empirical_threshold,
    locate_threshold,
    replication_seed,
    run_experiment,
    splitmix64,
    stats_to_csv,
)


def test_splitmix64_reference_outputs():
    # first two outputs of the reference generator started from state 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_replication_seeds_are_distinct_and_pure():
    seeds = {replication_seed(7, i, r) for i in range(20) for r in range(500)}
    assert len(seeds) == 10_000
    assert replication_seed(7, 3, 4) == replication_seed(7, 3, 4)
    assert replication_seed(7, 3, 4) != replication_seed(8, 3, 4)


@pytest.mark.parametrize("s,n,size", [(Fr(1, 2), 1000, 500), (Fr(1, 3), 10, 3), (Fr(1, 4), 2, 1), (Fr(1, 20), 10, 1),
                                      (0, 10, 0)])
def test_coalition_size_rounds_half_up(s, n, size):
    assert coalition_size(s, n) == size


def test_zero_share_commits_truth_in_one_round():
    stats = run_experiment(ExperimentConfig(Scenario.BFT_INFORMED, s_grid=(0,), trials=300))
    p = stats.per_s[0]
    assert p.degenerate and p.coalition_size == 0
    assert p.attack_rate == 0 and p.success_rate == 0 and p.mean_rounds == 1


def test_full_share_is_flagged_degenerate():
    p = run_experiment(ExperimentConfig(Scenario.BFT_INFORMED, s_grid=(1,), trials=50)).per_s[0]
    assert p.degenerate and p.success_rate == 1


def test_blind_forced_success_rate_is_s_squared():
    stats = run_experiment(ExperimentConfig(Scenario.BFT_BLIND, s_grid=(Fr(1, 2),), trials=100_000, master_seed=3))
    p = stats.per_s[0]
    se = math.sqrt(0.25 * 0.75 / 100_000)
    assert abs(p.success_rate - 0.25) < 3 * se


def test_informed_mean_matches_closed_form():
    n, s = 1000, Fr(3, 5)
    stats = run_experiment(ExperimentConfig(Scenario.BFT_INFORMED, s_grid=(s,), trials=40_000, master_seed=1))
    p = stats.per_s[0]
    a = coalition_size(s, n)
    ally = (a - 1) / (n - 1)
    expected = a / n * (ally * 3 - (1 - ally) * 1)
    assert abs(p.mean_payoff - expected) < 4 * p.stderr_payoff


def test_jobs_do_not_change_results():
    base = dict(scenario=Scenario.BFT_INFORMED, s_grid=(Fr(2, 5), Fr(3, 5)), trials=2000, master_seed=11)
    one = run_experiment(ExperimentConfig(**base, jobs=1))
    two = run_experiment(ExperimentConfig(**base, jobs=2))
    assert stats_to_csv(one) == stats_to_csv(two)


def test_csv_and_manifest(tmp_path):
    out = tmp_path / "run.csv"
    cfg = ExperimentConfig(Scenario.FORK_ALLOC, s_grid=(Fr(1, 5), Fr(4, 5)), trials=200, theta=1, F=0.75,
                           fixture="pre-spend", output_path=str(out))
    stats = run_experiment(cfg)
    lines = out.read_text().splitlines()
    assert tuple(lines[0].split(",")) == CSV_HEADER
    assert len(lines) == 3
    man = json.loads((tmp_path / "run.manifest.json").read_text())
    assert man["config"]["master_seed"] == 0 and man["csv"] == "run.csv"
    assert [pt["coalition_size"] for pt in man["points"]] == [200, 800]
    assert stats.empirical_threshold == Fr(1, 2)


def test_honest_anchor_blocks_double_spend():
    cfg = ExperimentConfig(Scenario.FORK_TX, s_grid=(Fr(1, 2), Fr(9, 10)), trials=3000, theta=1,
                           attack_mode=AttackMode.BEST_RESPONSE, honest_anchor=True)
    for p in run_experiment(cfg).per_s:
        assert p.success_rate == 0 and p.honest_loss_rate == 0


def test_without_anchor_allied_seats_delete_the_spend():
    cfg = ExperimentConfig(Scenario.FORK_TX, s_grid=(1,), trials=100, theta=1, attack_mode=AttackMode.BEST_RESPONSE)
    p = run_experiment(cfg).per_s[0]
    assert p.success_rate == 1 and p.honest_loss_rate == 1


def test_patient_runs_until_commit():
    cfg = ExperimentConfig(Scenario.BFT_PATIENT, n_nodes=20, s_grid=(Fr(1, 2),), trials=300)
    p = run_experiment(cfg).per_s[0]
    assert p.mean_rounds >= 1


def test_empirical_threshold_first_crossing():
    class P:
        def __init__(self, s, m, b=0.0):
            self.s, self.mean_payoff, self.baseline = Fr(s), m, b

    assert empirical_threshold([P("0.1", -1), P("0.2", -0.5), P("0.3", 0.5), P("0.4", -1)]) == Fr(1, 4)
    assert empirical_threshold([P("0.1", -1), P("0.2", -0.5)]) is None


def test_locate_threshold_requires_straddling_grid():
    cfg = ExperimentConfig(Scenario.BFT_INFORMED, s_grid=(Fr(1, 10), Fr(2, 10)), trials=10)
    with pytest.raises(ValueError, match="straddle"):
        locate_threshold(cfg, 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(Scenario.BFT_INFORMED, s_grid=(Fr(3, 2),))
    with pytest.raises(ValueError):
        ExperimentConfig(Scenario.BFT_INFORMED, F=0)
    with pytest.raises(ValueError):
        ExperimentConfig(Scenario.BFT_INFORMED, trials=0)
