"""
Levels of abstraction: L0 < L1 < L2.0 < L2.1 < ... < Lstar.

Usage
-----
    from metamodel.levels import L0, L1, LSTAR, Level, l2

    l2(3) > l2(0)            # True
    Level.parse("L2.4")      # Level(tier=2, sub=4)
"""
from __future__ import annotations

import re
from dataclasses import dataclass

_PATTERN = re.compile(r"^L(?:(?P<tier>[01])|2(?:\.(?P<sub>\d+))?|(?P<star>\*|star))$")


@dataclass(frozen=True, order=True)
class Level:
    tier: int
    sub: int = 0

    @classmethod
    def parse(cls, text: str) -> "Level":
        match = _PATTERN.match(str(text).strip())
        if not match:
            raise ValueError(f"unknown level {text!r}")
        if match.group('tier') is not None:
            return cls(int(match.group('tier')))
        if match.group('star') is not None:
            return LSTAR
        return cls(2, int(match.group('sub') or 0))

    @property
    def is_l2(self) -> bool:
        return self.tier == 2

    def __str__(self):
        if self.tier == 2:
            return f"L2.{self.sub}"
        if self.tier == 3:
            return "Lstar"
        return f"L{self.tier}"


L0 = Level(0)
L1 = Level(1)
LSTAR = Level(3)


def l2(sub: int = 0) -> Level:
    if sub < 0:
        raise ValueError("L2 sub-levels start at 0")
    return Level(2, int(sub))
