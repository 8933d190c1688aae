"""Registry of built-in targets."""

from __future__ import annotations

from advfuzz.goat import builtin_goat
from advfuzz.harness import BugInfo, FuzzTarget, assign_locations


def _loop_run(data: bytes, t) -> None:
    t(0)
    count = int.from_bytes(data[:2], "big") if data else 0
    for _ in range(count):
        t(1)
    t(2)


def builtin_loop() -> FuzzTarget:
    """Runs one self-loop edge ``int(data[:2])`` times; for counter tests."""
    return FuzzTarget(
        name="loop",
        run=_loop_run,
        bug_manifest=[],
        locations=assign_locations(3, 7),
        seeds=[b"\x00\x01"],
    )


BUILTIN = {
    "goat": builtin_goat,
    "loop": builtin_loop,
}


def get_target(name: str) -> FuzzTarget:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown target {name!r}; built-ins: {', '.join(sorted(BUILTIN))}") from None


__all__ = ["BUILTIN", "BugInfo", "get_target", "builtin_goat", "builtin_loop"]
