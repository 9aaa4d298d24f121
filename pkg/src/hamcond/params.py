"""Asymptotic constants as functions of ``(n, m)``.

Two profiles are provided. ``paper`` evaluates the literal formulas; they
only become meaningful at astronomically large ``n`` (for instance the core
degree ``log n / 100`` is 1 below ``n = e^200``). ``desk`` keeps the same
shape but uses constants that leave the machinery non-trivial at
``n`` between 10^2 and 10^5: a core degree of at least 3, a used-vertex cap
of ``8 nu`` (the ``n^{3/4}`` cap is below ``nu`` itself for any realistic
``n``), and ``short_growth``, which lets a rotation path absorb whole cycles
while it is still shorter than ``n0``. With ``inherit_w`` off, each
In-Phase tree starts from an empty used set instead of the one left by the
Out-Phase, which at these sizes already holds a large share of the vertices.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace


def log_n(n: int) -> float:
    """Natural log, floored at ``log 3`` so tiny graphs get finite constants."""
    return math.log(max(n, 3))


@dataclass(frozen=True)
class Parameters:
    n: int
    m: int
    profile: str
    delta0: float
    delta1: float
    d_min: int
    j1: int
    n0: int
    nu: int
    i0: int
    ell0: float
    w_cap: int
    small_threshold: float
    short_growth: bool = False
    inherit_w: bool = True

    def __post_init__(self):
        if self.d_min < 1 or self.n0 < 1 or self.nu < 1 or self.i0 < 1 or self.w_cap < 1:
            raise ValueError("parameters must be positive")
        if self.j1 > self.m:
            raise ValueError("j1 must not exceed m")
        if self.n0 > self.n:
            raise ValueError("n0 must not exceed n")

    @classmethod
    def paper(cls, n: int, m: int) -> "Parameters":
        lg = log_n(n)
        return cls(
            n=n,
            m=m,
            profile="paper",
            delta0=lg**2,
            delta1=6 * lg,
            d_min=max(1, math.floor(lg / 100)),
            j1=min(m, math.floor(n * lg / 5)),
            n0=_small_cycle_threshold(n),
            nu=math.ceil(math.sqrt(n) * lg),
            i0=math.ceil(1.5 * lg),
            ell0=lg / (20 * math.log(lg)),
            w_cap=max(1, math.floor(n**0.75)),
            small_threshold=lg / 100,
        )

    @classmethod
    def desk(cls, n: int, m: int) -> "Parameters":
        base = cls.paper(n, m)
        return replace(
            base,
            profile="desk",
            d_min=max(3, math.floor(log_n(n) / 6)),
            w_cap=min(n, max(base.w_cap, 8 * base.nu)),
            short_growth=True,
            inherit_w=False,
        )

    @classmethod
    def for_profile(cls, profile: str, n: int, m: int) -> "Parameters":
        if profile == "paper":
            return cls.paper(n, m)
        if profile == "desk":
            return cls.desk(n, m)
        raise ValueError(f"unknown profile {profile!r} (expected 'paper' or 'desk')")

    def to_dict(self) -> dict:
        return asdict(self)


def _small_cycle_threshold(n: int) -> int:
    return min(n, max(3, math.ceil(n / math.sqrt(log_n(n)))))


def threshold_m(n: int, c: float) -> int:
    """Edge count ``ceil(n/2 (log n + 2 log log n + c))``."""
    lg = math.log(n)
    return math.ceil(n / 2 * (lg + 2 * math.log(lg) + c))


def limit_probability(c: float) -> float:
    """Limiting Hamiltonicity probability ``exp(-exp(-c)/8)``."""
    return math.exp(-math.exp(-c) / 8)
