"""Built-in fork fixtures shipped with the package."""

import json
from importlib import resources

from .ledger import Fork, fork_from_dict

BUILTIN = {
    "double-spend": "double_spend.json",
    "pre-spend": "pre_spend.json",
    "accidental": "accidental.json",
}


def builtin_fork(name: str) -> Fork:
    try:
        filename = BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(BUILTIN)}") from None
    text = resources.files(__package__).joinpath("fixtures", filename).read_text()
    return fork_from_dict(json.loads(text))


def load_fork_fixture(name_or_path: str) -> Fork:
    """Resolve a built-in fixture name, else read a fork JSON file."""
    if name_or_path in BUILTIN:
        return builtin_fork(name_or_path)
    from .ledger import load_fork

    return load_fork(name_or_path)
