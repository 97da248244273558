"""Command-line entry point: ``mdconsensus <subcommand> [flags]``.

Exit codes: 0 on success, 2 for bad flags or out-of-domain values, 1 for
anything else. Economic parameters are parsed as exact decimals.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Sequence

from . import analytics
from .fixtures import BUILTIN, load_fork_fixture
from .fork_mechanism import ForkResolutionParams, MechanismNotTriggered
from .game_solver import GameSizeError, build_bft_game, build_fork_game, format_report, solve_spe
from .game_solver.builders import HONEST_SELECTIONS, MAX_BFT_NODES
from .ledger import LedgerError, diff_forks, final_allocations
from .sim_harness import AttackMode, ExperimentConfig, Scenario, run_experiment, stats_to_csv, write_outputs
from .sr_mechanism import MechanismParams, PairingMode


class DomainError(Exception):
    """A flag value outside its domain; reported with exit code 2."""

    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise DomainError(self.prog, message)


# -- value parsing --------------------------------------------------------------

def exact(text: str) -> Fraction:
    """Decimal string to an exact Fraction ("0.1" is 1/10, not a float)."""
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a decimal number: {text!r}") from None
    if not d.is_finite():
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return Fraction(d)


def exact_list(text: str) -> list[Fraction]:
    return [exact(part) for part in text.split(",") if part.strip()]


def s_grid(text: str) -> tuple[Fraction, ...]:
    """``lo:hi:step`` (inclusive of hi) or a comma list of shares."""
    if ":" not in text:
        return tuple(exact_list(text))
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected lo:hi:step")
    lo, hi, step = (exact(p) for p in parts)
    if step <= 0:
        raise argparse.ArgumentTypeError("step must be positive")
    if hi < lo:
        raise argparse.ArgumentTypeError("hi must not be below lo")
    count = int((hi - lo) / step)
    return tuple(lo + i * step for i in range(count + 1))


def _num(x: Fraction):
    """Integral fractions become ints so downstream arithmetic stays exact and cheap."""
    return int(x) if x.denominator == 1 else x


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if x is None:
        return ""
    if isinstance(x, Fraction) and x.denominator == 1:
        return str(x.numerator)
    if isinstance(x, int):
        return str(x)
    return f"{float(x):.10g}"


def table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)] if rows else \
        [len(h) for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit(args, header, rows) -> str:
    return (csv_text if args.format == "csv" else table)(header, rows)


def require(cond: bool, flag: str, message: str):
    if not cond:
        raise DomainError(flag, message)


def check_F(values, flag="--F"):
    for F in values:
        require(F > 0, flag, f"must be positive, got {fmt(F)}")


def check_nonneg(values, flag):
    for v in values:
        require(v >= 0, flag, f"must be non-negative, got {fmt(v)}")


# -- subcommands -------------------------------------------------------------------

THRESHOLD_COLUMNS = ("R", "F", "theta", "k", "thr_informed", "thr_blind", "beats_bft_informed",
                     "beats_bft_blind", "fork_s_low", "fork_s_high", "precondition")


def cmd_thresholds(args) -> str:
    check_F(args.F)
    check_nonneg(args.R, "--R")
    check_nonneg(args.theta, "--theta")
    for k in args.k:
        require(k >= 1, "--k", f"must be a positive integer, got {k}")
    rows = []
    for R in args.R:
        for F in args.F:
            for theta in args.theta:
                rep = analytics.threshold_report(R, F, theta)
                for k in args.k:
                    if R > 0:
                        fork = analytics.fork_attack_analysis(k, R, theta, F)
                        low, high, pre = fork.s_low, fork.s_high, fork.precondition_holds
                    else:
                        low = high = pre = None
                    rows.append([fmt(R), fmt(F), fmt(theta), str(k), fmt(rep.threshold_informed),
                                 fmt(rep.threshold_blind), fmt(rep.beats_bft_informed),
                                 fmt(rep.beats_bft_blind), fmt(low), fmt(high), fmt(pre)])
    return emit(args, THRESHOLD_COLUMNS, rows)


def _attackers(text: str, n: int) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            idx = int(part)
        except ValueError:
            raise DomainError("--attackers", f"not a node index: {part!r}") from None
        require(0 <= idx < n, "--attackers", f"index {idx} outside 0..{n - 1}")
        out.append(idx)
    return out


def cmd_solve(args) -> str:
    check_F([args.F])
    check_nonneg([args.R], "--R")
    require(args.theta > 0, "--theta", "must be positive")
    if args.scenario == "bft":
        require(2 <= args.nodes <= MAX_BFT_NODES, "--nodes", f"must lie in 2..{MAX_BFT_NODES}")
        params = MechanismParams(_num(args.R), _num(args.F), PairingMode(args.mode))
        tree = build_bft_game(args.nodes, _attackers(args.attackers, args.nodes), params, _num(args.theta),
                              shared_preference=not args.separate_preferences)
    else:
        require(args.H > args.D > 0, "--H", "need H > D > 0")
        fork = _fixture(args.fixture)
        fparams = ForkResolutionParams(fine_F=_num(args.F), length_tolerance=fork.length_tolerance)
        tree = build_fork_game(fork, args.honest, fparams, _num(args.theta), _num(args.H), _num(args.D),
                               mechanism=args.scenario.split("-")[1], claim_order=args.claim_order)
    result = solve_spe(tree)
    if args.format == "csv":
        rows = [[key.label, fmt(p), fmt(key.burned), ";".join(fmt(v) for v in key.payoffs)]
                for key, p in result.path_outcomes.items()]
        return csv_text(("outcome", "probability", "burned", "payoffs"), rows)
    return format_report(result, include_strategy=args.strategy)


def _fixture(name):
    try:
        return load_fork_fixture(name)
    except (OSError, LedgerError, ValueError, KeyError) as exc:
        raise DomainError("--fixture", str(exc)) from None


def cmd_simulate(args) -> str:
    check_F([args.F])
    check_nonneg([args.R], "--R")
    require(args.theta > 0, "--theta", "must be positive")
    require(args.nodes >= 2, "--nodes", "must be at least 2")
    require(args.trials >= 1, "--trials", "must be at least 1")
    require(args.jobs >= 1, "--jobs", "must be at least 1")
    require(args.k >= 1, "--k", "must be a positive integer")
    require(args.H > args.D > 0, "--H", "need H > D > 0")
    require(bool(args.s_grid), "--s-grid", "is empty")
    for s in args.s_grid:
        require(0 <= s <= 1, "--s-grid", f"share {fmt(s)} outside [0, 1]")
    scenario = Scenario(args.scenario)
    if scenario in (Scenario.FORK_TX, Scenario.FORK_ALLOC):
        _fixture(args.fixture)
    cfg = ExperimentConfig(
        scenario=scenario,
        n_nodes=args.nodes,
        s_grid=args.s_grid,
        R=float(args.R),
        F=float(args.F),
        theta=float(args.theta),
        k=args.k,
        H=float(args.H),
        D=float(args.D),
        trials=args.trials,
        master_seed=args.seed,
        attack_mode=AttackMode(args.attack_mode),
        fixture=args.fixture,
        honest_anchor=args.honest_anchor,
        jobs=args.jobs,
    )
    try:
        stats = run_experiment(cfg)
    except MechanismNotTriggered as exc:
        raise DomainError("--fixture", str(exc)) from None
    if args.output:
        write_outputs(stats, args.output)
    if args.format == "csv":
        return stats_to_csv(stats)
    header = ("s", "coalition", "attack_rate", "success_rate", "mean_payoff", "stderr", "baseline",
              "mean_rounds")
    rows = [[fmt(p.s), str(p.coalition_size) + ("*" if p.degenerate else ""), fmt(p.attack_rate),
             fmt(p.success_rate), fmt(p.mean_payoff), fmt(p.stderr_payoff), fmt(p.baseline),
             fmt(p.mean_rounds)] for p in stats.per_s]
    thr = fmt(stats.empirical_threshold) if stats.empirical_threshold is not None else "not found"
    return table(header, rows) + f"empirical_threshold: {thr}\n"


def cmd_patient(args) -> str:
    check_F([args.F])
    check_nonneg([args.R, args.theta], "--R/--theta")
    require(args.a >= 0, "--a", "must be non-negative")
    require(args.h >= 0, "--h", "must be non-negative")
    R, theta, F = _num(args.R), _num(args.theta), _num(args.F)
    if args.full:
        tab = analytics.patient_attack_dp(args.a, args.h, R, theta, F)
        states = sorted(tab.values)
        values = {st: (tab[st], tab.policy[st]) for st in states}
    else:
        states = [(args.a, args.h)]
        v = analytics.patient_value_at(args.a, args.h, R, theta, F)
        values = {states[0]: (v, {seat: analytics.patient_policy_at(args.a, args.h, R, theta, F, seat)
                                  for seat in ("proposer", "confirmer")})}
    header = ("a", "h", "value", "proposer", "confirmer")
    rows = [[str(a), str(h), fmt(v), pol.get("proposer", ""), pol.get("confirmer", "")]
            for (a, h), (v, pol) in values.items()]
    out = emit(args, header, rows)
    if args.compare and args.format == "table":
        out += analytics.compare_patient(args.a, args.h, R, theta, F).report() + "\n"
    return out


def cmd_fork_diff(args) -> str:
    fork = _fixture(args.fixture)
    diff = diff_forks(fork)
    rows = [[tx.id, "common", tx.sender, tx.receiver, fmt(tx.amount), str(ts)] for tx, ts in diff.common]
    rows += [[tx.id, "A-only", tx.sender, tx.receiver, fmt(tx.amount), str(tx.timestamp)]
             for tx in diff.disputed_a_only]
    rows += [[tx.id, "B-only", tx.sender, tx.receiver, fmt(tx.amount), str(tx.timestamp)]
             for tx in diff.disputed_b_only]
    out = emit(args, ("id", "where", "sender", "receiver", "amount", "timestamp"), rows)
    if args.format == "table":
        alloc_a, alloc_b = final_allocations(fork.chain_a), final_allocations(fork.chain_b)
        accounts = sorted(set(alloc_a.balances) | set(alloc_b.balances))
        out += (f"\nheights: A={fork.chain_a.height} B={fork.chain_b.height} "
                f"ancestor={fork.common_ancestor_height} gap={fork.length_gap} "
                f"tolerance={fork.length_tolerance} triggered={fmt(fork.within_tolerance)}\n\n")
        out += table(("account", "chain_a", "chain_b"),
                     [[acct, fmt(alloc_a[acct]), fmt(alloc_b[acct])] for acct in accounts])
    return out


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mdconsensus", description="Incentive analysis of SR consensus and fork resolution.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fmt_flag(sp):
        sp.add_argument("--format", choices=("table", "csv"), default="table", help="output encoding (default table)")

    t = sub.add_parser("thresholds", help="closed-form attack thresholds",
                       description="Closed-form thresholds. Each economic flag takes a decimal or a comma list; "
                                   "rows cover every combination.")
    t.add_argument("--R", type=exact_list, default=[Fraction(1)], help="block reward, >= 0 (default 1)")
    t.add_argument("--F", type=exact_list, default=[Fraction(1)], help="fine, > 0 (default 1)")
    t.add_argument("--theta", type=exact_list, default=[Fraction(2)], help="distortion value, >= 0 (default 2)")
    t.add_argument("--k", type=lambda x: [int(v) for v in x.split(",")], default=[1],
                   help="fork length in blocks, integer >= 1 (default 1)")
    fmt_flag(t)
    t.set_defaults(func=cmd_thresholds)

    s = sub.add_parser("solve", help="subgame perfect equilibria of a mechanism game",
                       description="Build the game tree and solve it by backward induction.")
    s.add_argument("--scenario", choices=("bft", "fork-tx", "fork-alloc"), default="bft", help="game (default bft)")
    s.add_argument("--nodes", type=int, default=3, help=f"bft: number of nodes, 2..{MAX_BFT_NODES} (default 3)")
    s.add_argument("--attackers", default="", help="bft: comma list of attacker node indices (default none)")
    s.add_argument("--mode", choices=[m.value for m in PairingMode], default="informed",
                   help="bft: pairing mode (default informed)")
    s.add_argument("--separate-preferences", action="store_true",
                   help="bft: each attacker prefers its own distorted block")
    s.add_argument("--fixture", default="double-spend",
                   help=f"fork: built-in fixture ({', '.join(BUILTIN)}) or JSON path (default double-spend)")
    s.add_argument("--honest", choices=HONEST_SELECTIONS, default="a", help="fork: honest seats (default a)")
    s.add_argument("--claim-order", choices=("sequential", "simultaneous"), default="sequential",
                   help="fork-alloc: whether b sees a's claim (default sequential)")
    s.add_argument("--R", type=exact, default=Fraction(1), help="block reward, >= 0 (default 1)")
    s.add_argument("--F", type=exact, default=Fraction(1), help="fine, > 0 (default 1)")
    s.add_argument("--theta", type=exact, default=Fraction(2), help="distortion value, > 0 (default 2)")
    s.add_argument("--H", type=exact, default=Fraction(2), help="fork: honest value of the true chain (default 2)")
    s.add_argument("--D", type=exact, default=Fraction(1), help="fork: honest loss on the wrong chain, 0 < D < H "
                                                                "(default 1)")
    s.add_argument("--no-strategy", dest="strategy", action="store_false", help="omit the strategy profile")
    fmt_flag(s)
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("simulate", help="Monte Carlo sweep over the coalition share",
                       description="Monte Carlo sweep. Every random draw derives from --seed.")
    m.add_argument("--scenario", choices=[sc.value for sc in Scenario], default="bft-informed",
                   help="scenario (default bft-informed)")
    m.add_argument("--nodes", type=int, default=1000, help="population size, >= 2 (default 1000)")
    m.add_argument("--s-grid", type=s_grid, default=s_grid("0:1:0.1"),
                   help="coalition shares in [0, 1]: lo:hi:step or a comma list (default 0:1:0.1)")
    m.add_argument("--R", type=exact, default=Fraction(1), help="block reward, >= 0 (default 1)")
    m.add_argument("--F", type=exact, default=Fraction(1), help="fine, > 0 (default 1)")
    m.add_argument("--theta", type=exact, default=Fraction(2), help="distortion value, > 0 (default 2)")
    m.add_argument("--k", type=int, default=1, help="fork length in blocks, >= 1 (default 1)")
    m.add_argument("--H", type=exact, default=Fraction(2), help="honest value of the true chain (default 2)")
    m.add_argument("--D", type=exact, default=Fraction(1), help="honest loss, 0 < D < H (default 1)")
    m.add_argument("--trials", type=int, default=1000, help="replications per share, >= 1 (default 1000)")
    m.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    m.add_argument("--attack-mode", choices=[a.value for a in AttackMode], default="forced",
                   help="coalition behaviour (default forced)")
    m.add_argument("--fixture", default="double-spend", help="fork scenarios: fixture name or path "
                                                              "(default double-spend)")
    m.add_argument("--honest-anchor", action="store_true", help="fork scenarios: keep one seat honest")
    m.add_argument("--jobs", type=int, default=1, help="worker processes, >= 1; output does not depend on it")
    m.add_argument("--output", help="also write CSV here, plus a .manifest.json next to it")
    fmt_flag(m)
    m.set_defaults(func=cmd_simulate)

    pt = sub.add_parser("patient", help="patient coalition dynamic programme",
                        description="Value and policy of a patient coalition with a members among a + h nodes.")
    pt.add_argument("--a", type=int, default=2, help="coalition members left, >= 0 (default 2)")
    pt.add_argument("--h", type=int, default=1, help="honest nodes left, >= 0 (default 1)")
    pt.add_argument("--R", type=exact, default=Fraction(1), help="block reward, >= 0 (default 1)")
    pt.add_argument("--F", type=exact, default=Fraction(1), help="fine, > 0 (default 1)")
    pt.add_argument("--theta", type=exact, default=Fraction(2), help="distortion value, >= 0 (default 2)")
    pt.add_argument("--full", action="store_true", help="print every state below (a, h)")
    pt.add_argument("--compare", action="store_true", help="table format: add the literal-recursion comparison")
    fmt_flag(pt)
    pt.set_defaults(func=cmd_patient)

    fd = sub.add_parser("fork-diff", help="inspect a fork fixture",
                        description="Common and disputed transactions of a fork, and both final allocations.")
    fd.add_argument("--fixture", default="double-spend",
                    help=f"built-in fixture ({', '.join(BUILTIN)}) or JSON path (default double-spend)")
    fmt_flag(fd)
    fd.set_defaults(func=cmd_fork_diff)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        out = args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (DomainError, GameSizeError, MechanismNotTriggered) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
