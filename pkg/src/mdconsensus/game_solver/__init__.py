"""Extensive-form games for the consensus mechanisms and their equilibria."""

from .builders import GameSizeError, build_bft_game, build_fork_game
from .oracle import TooManyProfiles, enumerate_spe, enumerate_spe_profiles
from .report import format_report
from .solver import (
    Equilibrium,
    OutcomeKey,
    SolverLimitError,
    SpeResult,
    outcome_distribution,
    proper_subgame_roots,
    same_distribution,
    solve_spe,
)
from .tree import Chance, Decision, GameTree, GameTreeError, Terminal

__all__ = [
    "Chance",
    "Decision",
    "Equilibrium",
    "GameSizeError",
    "GameTree",
    "GameTreeError",
    "OutcomeKey",
    "SolverLimitError",
    "SpeResult",
    "Terminal",
    "TooManyProfiles",
    "build_bft_game",
    "build_fork_game",
    "enumerate_spe",
    "enumerate_spe_profiles",
    "format_report",
    "outcome_distribution",
    "proper_subgame_roots",
    "same_distribution",
    "solve_spe",
]
