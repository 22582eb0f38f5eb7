"""When apoptosis fires and how aggressive each event is."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ContractError

PRESETS: dict[str, float] = {
    "very-conservative": 2.5,
    "conservative": 2.0,
    "normal": 1.75,
    "aggressive": 1.5,
    "very-aggressive": 1.25,
}


# -- initial point ------------------------------------------------------------

@dataclass(frozen=True)
class QuarterLife:
    pass


@dataclass(frozen=True)
class HalfLife:
    pass


@dataclass(frozen=True)
class RandomPoint:
    seed: int = 0


@dataclass(frozen=True)
class EndOfTraining:
    pass


InitialPoint = Union[QuarterLife, HalfLife, RandomPoint, EndOfTraining]


# -- subsequent events --------------------------------------------------------

@dataclass(frozen=True)
class Logarithmic:
    min_gap: int = 1

    def __post_init__(self):
        if self.min_gap < 1:
            raise ContractError(f"min_gap must be >= 1, got {self.min_gap}")


@dataclass(frozen=True)
class Fixed:
    interval: int

    def __post_init__(self):
        if self.interval < 1:
            raise ContractError(f"interval must be >= 1, got {self.interval}")


@dataclass(frozen=True)
class RandomCount:
    count: int
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise ContractError(f"count must be >= 0, got {self.count}")


Subsequent = Union[Logarithmic, Fixed, RandomCount]


# -- degree ---------------------------------------------------------------------

@dataclass(frozen=True)
class FixedDegree:
    factor: float = PRESETS["normal"]

    def __post_init__(self):
        if not self.factor > 1.0:
            raise ContractError(f"factor must be > 1, got {self.factor}")


@dataclass(frozen=True)
class LinearRamp:
    """Factor moves linearly from ``start`` to ``end``; lower is more aggressive."""

    start: float
    end: float

    def __post_init__(self):
        for name, value in (("start", self.start), ("end", self.end)):
            if not 1.1 <= value <= 10.0:
                raise ContractError(f"ramp {name} must lie in [1.1, 10], got {value}")


Degree = Union[FixedDegree, LinearRamp]


@dataclass(frozen=True)
class ApoptosisConfig:
    initial: InitialPoint = field(default_factory=QuarterLife)
    subsequent: Subsequent = field(default_factory=Logarithmic)
    degree: Degree = field(default_factory=FixedDegree)

    @classmethod
    def preset(cls, name: str, **kwargs) -> "ApoptosisConfig":
        try:
            f = PRESETS[name]
        except KeyError:
            raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(degree=FixedDegree(f), **kwargs)


def schedule_events(T: int, cfg: ApoptosisConfig) -> list[int]:
    """Iteration counts (1..T) after which apoptosis runs, strictly increasing."""
    if T < 4:
        raise ContractError(f"total iterations must be >= 4, got {T}")
    init = cfg.initial
    if isinstance(init, EndOfTraining):
        return [T]
    if isinstance(init, QuarterLife):
        t0 = T // 4
    elif isinstance(init, HalfLife):
        t0 = T // 2
    elif isinstance(init, RandomPoint):
        t0 = int(np.random.default_rng(init.seed).integers(1, T + 1))
    else:
        raise ContractError(f"unknown initial point {init!r}")

    events = [t0]
    sub = cfg.subsequent
    if isinstance(sub, Logarithmic):
        t = t0
        while True:
            step = math.ceil((T - t) / 2)
            if step < sub.min_gap or step == 0:
                break
            t += step
            events.append(t)
    elif isinstance(sub, Fixed):
        t = t0 + sub.interval
        while t <= T:
            events.append(t)
            t += sub.interval
    elif isinstance(sub, RandomCount):
        pool = np.arange(t0 + 1, T + 1)
        k = min(sub.count, pool.size)
        if k:
            draws = np.random.default_rng(sub.seed).choice(pool, size=k, replace=False)
            events.extend(int(t) for t in np.sort(draws))
    else:
        raise ContractError(f"unknown subsequent policy {sub!r}")
    return events


def factor_at(k: int, K: int, degree: Degree) -> float:
    """Factor for the ``k``-th of ``K`` events."""
    if not 0 <= k < K:
        raise ContractError(f"event index {k} out of range for {K} events")
    if isinstance(degree, FixedDegree):
        return degree.factor
    if K == 1:
        return degree.start
    return degree.start + (degree.end - degree.start) * k / (K - 1)
