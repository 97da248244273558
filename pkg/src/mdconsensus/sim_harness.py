"""Monte Carlo sweeps over the coalition share.

Every replication gets its own ``random.Random`` seeded by :func:`replication_seed`,
so results do not depend on scheduling; aggregation always runs in index
order, which makes ``jobs > 1`` bit-identical to a serial run.

What a replication returns (``payoff``) follows the expected-return
expressions the thresholds come from; ``engine_payoff`` is the coalition's
literal token payoff from the engine and is reported next to it.

* ``bft-informed``: one round; the coalition's token payoff plus θ if the
  distorted block commits; baseline sR.
* ``bft-blind``: an ordinary round. Return R + θ if the distorted block
  commits, else -F; baseline R.
* ``bft-patient``: run until commit with the patient policy; the coalition's
  token payoff plus θ on a distorted commit; baseline sR.
* ``fork-alloc``: seats a and b drawn without replacement. Return
  -F (if a is in the coalition) plus kR + θ if chain B is confirmed, else skR;
  baseline skR.
* ``fork-tx``: fines plus θ on a dishonest resolution; baseline 0.

With ``honest_anchor`` one fork seat, picked at random, is always honest.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import random
from dataclasses import asdict, dataclass
from fractions import Fraction
from multiprocessing import get_context
from pathlib import Path
from typing import Sequence

from .agents import Strategy, attacker_policy, blind_attack_pays, honest_policy
from .fixtures import load_fork_fixture
from .fork_mechanism import (
    AllocResolution,
    ForkResolutionParams,
    removed_valid_transactions,
    resolve_fork_alloc,
    resolve_fork_tx,
)
from .ledger import final_allocations
from .sr_mechanism import MechanismParams, PairingMode, Population, play_pair, run_until_commit

MASK64 = (1 << 64) - 1


class Scenario(enum.Enum):
    BFT_INFORMED = "bft-informed"
    BFT_BLIND = "bft-blind"
    BFT_PATIENT = "bft-patient"
    FORK_TX = "fork-tx"
    FORK_ALLOC = "fork-alloc"


class AttackMode(enum.Enum):
    FORCED = "forced"
    BEST_RESPONSE = "best-response"


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replication_seed(master_seed: int, s_index: int, rep_index: int) -> int:
    """seed = sm(sm(sm(master) ^ s_index) ^ rep_index), sm = splitmix64. Fixed forever."""
    return splitmix64(splitmix64(splitmix64(master_seed & MASK64) ^ s_index) ^ rep_index)


def coalition_size(s, n: int) -> int:
    """round(s * n), halves rounded up."""
    return math.floor(Fraction(s) * n + Fraction(1, 2))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    n_nodes: int = 1000
    s_grid: tuple = (Fraction(1, 2),)
    R: float = 1.0
    F: float = 1.0
    theta: float = 2.0
    k: int = 1
    H: float = 2.0
    D: float = 1.0
    trials: int = 1000
    master_seed: int = 0
    output_path: str | None = None
    attack_mode: AttackMode = AttackMode.FORCED
    fixture: str = "double-spend"
    honest_anchor: bool = False
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "s_grid", tuple(Fraction(s) for s in self.s_grid))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be at least 2")
        if not self.s_grid:
            raise ValueError("s_grid is empty")
        if any(not 0 <= s <= 1 for s in self.s_grid):
            raise ValueError("coalition shares must lie in [0, 1]")
        if self.F <= 0:
            raise ValueError("F must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.value
        d["attack_mode"] = self.attack_mode.value
        d["s_grid"] = [str(s) for s in self.s_grid]
        return d


@dataclass(frozen=True)
class PointStats:
    s: Fraction
    coalition_size: int
    degenerate: bool
    attack_rate: float
    success_rate: float
    mean_payoff: float
    stderr_payoff: float
    mean_rounds: float
    baseline: float
    mean_engine_payoff: float
    honest_loss_rate: float = 0.0  # share of trials that removed a valid transaction


@dataclass(frozen=True)
class ExperimentStats:
    config: ExperimentConfig
    per_s: tuple[PointStats, ...]
    empirical_threshold: Fraction | None

    def point(self, s) -> PointStats:
        s = Fraction(s)
        for p in self.per_s:
            if p.s == s:
                return p
        raise KeyError(s)


@dataclass(frozen=True)
class Replication:
    attacked: bool
    succeeded: bool
    payoff: float
    engine_payoff: float
    rounds: int
    removed_valid: bool = False


# -- per-scenario replications -------------------------------------------------

class _Setup:
    """Immutable per-grid-point state shared by all replications."""

    def __init__(self, cfg: ExperimentConfig, s: Fraction):
        self.cfg = cfg
        self.s = s
        n = cfg.n_nodes
        self.a = coalition_size(s, n)
        width = len(str(n - 1))
        self.nodes = tuple(f"n{i:0{width}d}" for i in range(n))
        self.coalition = self.nodes[: self.a]
        self.honest = self.nodes[self.a:]
        strategy = {
            AttackMode.FORCED: Strategy.FORCED,
            AttackMode.BEST_RESPONSE: Strategy.BEST_RESPONSE,
        }[cfg.attack_mode]
        if cfg.scenario is Scenario.BFT_PATIENT:
            strategy = Strategy.PATIENT
        self.attacker = attacker_policy(cfg.theta, "coalition", strategy, H=cfg.H, D=cfg.D)
        self.honest_policy = honest_policy(cfg.H, cfg.D)
        self.policies = {v: self.attacker for v in self.coalition}
        self.policies.update({v: self.honest_policy for v in self.honest})
        self.distorted = self.attacker.preferred_block("coalition")
        if cfg.scenario in (Scenario.BFT_INFORMED, Scenario.BFT_BLIND, Scenario.BFT_PATIENT):
            mode = PairingMode.BLIND if cfg.scenario is Scenario.BFT_BLIND else PairingMode.INFORMED
            self.params = MechanismParams(cfg.R, cfg.F, mode, reveal_partner=cfg.scenario is Scenario.BFT_PATIENT)
            self.population = Population(self.nodes, self.policies)
        else:
            self.fork = load_fork_fixture(cfg.fixture)
            reveal = "none" if cfg.attack_mode is AttackMode.FORCED else "both"
            self.fork_params = ForkResolutionParams(fine_F=cfg.F, length_tolerance=self.fork.length_tolerance,
                                                    reveal=reveal)
            self.true_alloc = final_allocations(self.fork.chain_a)

    def _coalition_payoff(self, payoffs, committed) -> float:
        total = sum(v for node, v in payoffs.items() if node in self.policies and self.policies[node] is self.attacker)
        if committed == self.distorted:
            total += self.cfg.theta
        return total

    def baseline(self) -> float:
        cfg = self.cfg
        if cfg.scenario is Scenario.BFT_BLIND:
            return cfg.R
        if cfg.scenario in (Scenario.BFT_INFORMED, Scenario.BFT_PATIENT):
            return float(self.a / cfg.n_nodes * cfg.R)
        if cfg.scenario is Scenario.FORK_ALLOC:
            return float(self.a / cfg.n_nodes * cfg.k * cfg.R)
        return 0.0

    def run(self, rng: random.Random) -> Replication:
        sc = self.cfg.scenario
        if sc is Scenario.BFT_INFORMED:
            return self._bft_informed(rng)
        if sc is Scenario.BFT_BLIND:
            return self._bft_blind(rng)
        if sc is Scenario.BFT_PATIENT:
            return self._bft_patient(rng)
        if sc is Scenario.FORK_ALLOC:
            return self._fork_alloc(rng)
        return self._fork_tx(rng)

    def _draw_other(self, rng, taken: str) -> str:
        j = rng.randrange(len(self.nodes) - 1)
        other = self.nodes[j]
        return self.nodes[-1] if other == taken else other

    def _distorted_sent(self, outcome) -> bool:
        return self.distorted in (outcome.m_p, outcome.m_c)

    def _bft_informed(self, rng) -> Replication:
        proposer, confirmer = rng.sample(self.nodes, 2)
        out = play_pair(proposer, confirmer, self.population, self.policies, self.params, rng)
        pay = self._coalition_payoff(out.payoffs, out.committed)
        return Replication(self._distorted_sent(out), out.committed == self.distorted, pay, pay, 1)

    def _bft_blind(self, rng) -> Replication:
        cfg = self.cfg
        proposer, confirmer = rng.sample(self.nodes, 2)
        out = play_pair(proposer, confirmer, self.population, self.policies, self.params, rng)
        success = out.committed == self.distorted
        if self.a and self._blind_attacks():
            ret = cfg.R + cfg.theta if success else -cfg.F
        else:
            ret = cfg.R  # abstaining earns the baseline
        return Replication(self._distorted_sent(out), success, ret,
                           self._coalition_payoff(out.payoffs, out.committed), 1)

    def _blind_attacks(self) -> bool:
        if self.cfg.attack_mode is AttackMode.FORCED:
            return True
        return blind_attack_pays(self.a / self.cfg.n_nodes, self.cfg.R, self.cfg.F, self.cfg.theta)

    def _bft_patient(self, rng) -> Replication:
        run = run_until_commit(self.population, self.policies, self.params, rng)
        pay = self._coalition_payoff(run.payoffs(), run.final_committed)
        attacked = any(self._distorted_sent(r) or (r.m_p_challenge == self.distorted) for r in run.rounds)
        return Replication(attacked, run.final_committed == self.distorted, pay, pay, run.total_rounds)

    def _seats(self, rng):
        a_node, b_node = rng.sample(self.nodes, 2)
        if self.cfg.honest_anchor and self.honest:
            # one seat, chosen at random, is forced honest
            anchor = self.honest[rng.randrange(len(self.honest))]
            other = self._draw_other(rng, anchor)
            a_node, b_node = (anchor, other) if rng.random() < 0.5 else (other, anchor)
        return a_node, b_node

    def _fork_alloc(self, rng) -> Replication:
        cfg = self.cfg
        a_node, b_node = self._seats(rng)
        pa, pb = self.policies[a_node], self.policies[b_node]
        out = resolve_fork_alloc(self.fork, pa, pb, self.fork_params, rng,
                                 coalition_share_s=self.a / cfg.n_nodes, fork_blocks_k=cfg.k)
        b_confirmed = out.resolution is AllocResolution.CHAIN_B_CONFIRMED
        kR, s = cfg.k * cfg.R, self.a / cfg.n_nodes
        ret = (-cfg.F if pa is self.attacker else 0.0) + (kR + cfg.theta if b_confirmed else s * kR)
        engine = sum(out.fines.get(seat, 0.0) for seat, p in (("a", pa), ("b", pb)) if p is self.attacker)
        if b_confirmed and self.a:
            engine += cfg.theta
        attacked = "B" in [c for c, p in zip(out.claims, (pa, pb)) if p is self.attacker]
        lost = out.resolution is not AllocResolution.CHAIN_A_CONFIRMED
        return Replication(attacked, b_confirmed, ret, engine, 1, removed_valid=lost)

    def _fork_tx(self, rng) -> Replication:
        cfg = self.cfg
        a_node, b_node = self._seats(rng)
        pa, pb = self.policies[a_node], self.policies[b_node]
        resolved, outcomes = resolve_fork_tx(self.fork, pa, pb, self.fork_params, rng)
        dishonest = final_allocations(resolved) != self.true_alloc
        removed = bool(removed_valid_transactions(self.fork, resolved))
        fines = sum(o.fines.get(seat, 0.0) for o in outcomes for seat, p in (("a", pa), ("b", pb)) if p is self.attacker)
        pay = fines + (cfg.theta if dishonest and self.a else 0.0)
        attacked = any(o.triggered for o in outcomes)
        return Replication(attacked, dishonest, pay, pay, 1, removed_valid=removed)


# -- driver ---------------------------------------------------------------------

def _run_chunk(args) -> list[Replication]:
    cfg, s_index, start, stop = args
    setup = _Setup(cfg, cfg.s_grid[s_index])
    out = []
    for rep in range(start, stop):
        rng = random.Random(replication_seed(cfg.master_seed, s_index, rep))
        out.append(setup.run(rng))
    return out


def _aggregate(s: Fraction, setup: _Setup, reps: Sequence[Replication]) -> PointStats:
    n = len(reps)
    mean = math.fsum(r.payoff for r in reps) / n
    var = math.fsum((r.payoff - mean) ** 2 for r in reps) / (n - 1) if n > 1 else 0.0
    return PointStats(
        s=s,
        coalition_size=setup.a,
        degenerate=setup.a in (0, setup.cfg.n_nodes),
        attack_rate=sum(r.attacked for r in reps) / n,
        success_rate=sum(r.succeeded for r in reps) / n,
        mean_payoff=mean,
        stderr_payoff=math.sqrt(var / n),
        mean_rounds=sum(r.rounds for r in reps) / n,
        baseline=setup.baseline(),
        mean_engine_payoff=math.fsum(r.engine_payoff for r in reps) / n,
        honest_loss_rate=sum(r.removed_valid for r in reps) / n,
    )


def empirical_threshold(points: Sequence[PointStats]) -> Fraction | None:
    """Midpoint of the first grid interval where mean payoff crosses the baseline."""
    diffs = [(p.s, p.mean_payoff - p.baseline) for p in points]
    for (s0, d0), (s1, d1) in zip(diffs, diffs[1:]):
        if (d0 < 0 <= d1) or (d0 > 0 >= d1):
            return (s0 + s1) / 2
    return None


def run_experiment(config: ExperimentConfig) -> ExperimentStats:
    """Run every grid point and, if ``output_path`` is set, write CSV and manifest."""
    chunks = []
    per_worker = max(1, math.ceil(config.trials / (4 * config.jobs)))
    for si in range(len(config.s_grid)):
        for start in range(0, config.trials, per_worker):
            chunks.append((config, si, start, min(config.trials, start + per_worker)))
    if config.jobs > 1:
        with get_context("spawn").Pool(config.jobs) as pool:
            results = pool.map(_run_chunk, chunks)
    else:
        results = [_run_chunk(c) for c in chunks]
    by_s: dict[int, list[Replication]] = {}
    for (_, si, _, _), reps in zip(chunks, results):
        by_s.setdefault(si, []).extend(reps)
    points = tuple(_aggregate(s, _Setup(config, s), by_s[i]) for i, s in enumerate(config.s_grid))
    stats = ExperimentStats(config, points, empirical_threshold(points))
    if config.output_path:
        write_outputs(stats, config.output_path)
    return stats


def locate_threshold(config: ExperimentConfig, analytics_prediction) -> tuple[Fraction | None, float | None]:
    """Empirical threshold and its absolute gap to ``analytics_prediction``."""
    pred = float(analytics_prediction)
    lo, hi = config.s_grid[0], config.s_grid[-1]
    if not lo <= pred <= hi:
        raise ValueError(f"grid [{float(lo)}, {float(hi)}] does not straddle the prediction {pred}")
    stats = run_experiment(config)
    if stats.empirical_threshold is None:
        return None, None
    return stats.empirical_threshold, abs(float(stats.empirical_threshold) - pred)


# -- output -----------------------------------------------------------------------

CSV_HEADER = ("scenario", "n", "s", "R", "F", "theta", "k", "trials", "attack_rate", "success_rate",
              "mean_payoff", "stderr_payoff", "mean_rounds", "empirical_threshold")


def _f(x) -> str:
    return repr(float(x))


def stats_to_csv(stats: ExperimentStats) -> str:
    cfg = stats.config
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    thr = _f(stats.empirical_threshold) if stats.empirical_threshold is not None else ""
    for p in stats.per_s:
        w.writerow([cfg.scenario.value, cfg.n_nodes, _f(p.s), _f(cfg.R), _f(cfg.F), _f(cfg.theta), cfg.k,
                    cfg.trials, _f(p.attack_rate), _f(p.success_rate), _f(p.mean_payoff),
                    _f(p.stderr_payoff), _f(p.mean_rounds), thr])
    return buf.getvalue()


def manifest(stats: ExperimentStats, csv_name: str | None = None) -> dict:
    cfg = stats.config
    return {
        "config": cfg.to_dict(),
        "csv": csv_name,
        "seed_derivation": "splitmix64(splitmix64(splitmix64(master_seed) ^ s_index) ^ rep_index)",
        "points": [
            {
                "s": str(p.s),
                "coalition_size": p.coalition_size,
                "degenerate": p.degenerate,
                "baseline": p.baseline,
                "mean_engine_payoff": p.mean_engine_payoff,
                "honest_loss_rate": p.honest_loss_rate,
            }
            for p in stats.per_s
        ],
        "empirical_threshold": str(stats.empirical_threshold) if stats.empirical_threshold is not None else None,
    }


def write_outputs(stats: ExperimentStats, output_path: str) -> tuple[Path, Path]:
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(stats_to_csv(stats))
    man = path.with_name(path.stem + ".manifest.json")
    man.write_text(json.dumps(manifest(stats, path.name), indent=2, sort_keys=True) + "\n")
    return path, man
