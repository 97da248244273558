"""Plain-text serialisation of solver results."""

from __future__ import annotations

from .solver import SpeResult


def _fmt(x) -> str:
    return f"{float(x):.9g}"


def _infoset(key) -> str:
    if isinstance(key, tuple):
        return "/".join(_infoset(k) for k in key)
    return str(key)


def format_report(result: SpeResult, include_strategy: bool = True) -> str:
    lines = []
    meta = " ".join(f"{k}={v}" for k, v in result.meta.items())
    lines.append(f"game: {meta}")
    lines.append(f"players: {' '.join(result.players)}")
    lines.append(f"equilibria: {len(result.equilibria)}")
    lines.append(f"outcome_unique: {str(result.outcome_unique).lower()}")
    lines.append(f"strategy_unique: {str(result.strategy_unique).lower()}")
    lines.append(f"truncated: {str(result.truncated).lower()}")
    commit = result.on_path_commit.payload if result.on_path_commit is not None else "none"
    lines.append(f"on_path_commit: {commit}")
    lines.append(f"on_path_fines: {_fmt(result.on_path_fines)}")
    lines.append("path_outcomes:")
    for key, p in result.path_outcomes.items():
        pay = ",".join(_fmt(v) for v in key.payoffs)
        lines.append(f"  p={_fmt(p)} outcome={key.label} burned={_fmt(key.burned)} payoffs=({pay})")
    lines.append("ties: " + (", ".join(_infoset(t) for t in result.ties) if result.ties else "none"))
    if include_strategy:
        lines.append("strategy:")
        for key in sorted(result.strategy_profile, key=_infoset):
            lines.append(f"  {_infoset(key)} -> {result.strategy_profile[key]}")
    return "\n".join(lines) + "\n"
