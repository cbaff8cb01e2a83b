"""Cyclic loading programs: constant amplitude or repeating blocks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

from .errors import ValidationError


@dataclass(frozen=True)
class LoadBlock:
    sigma_max: float
    sigma_min: float
    cycles: int | None = None  # None repeats forever

    def __post_init__(self):
        if not (self.sigma_max > self.sigma_min >= 0):
            raise ValidationError(
                f"block needs sigma_max > sigma_min >= 0, got {self.sigma_max}, {self.sigma_min}"
            )
        if self.cycles is not None and self.cycles < 1:
            raise ValidationError("finite block needs at least one cycle")

    @property
    def delta_sigma(self) -> float:
        return self.sigma_max - self.sigma_min


@dataclass(frozen=True)
class LoadingSpec:
    blocks: tuple[LoadBlock, ...]
    frequency_hz: float = 5.0

    def __post_init__(self):
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValidationError("loading needs at least one block")
        forever = [b.cycles is None for b in blocks]
        if any(forever) and len(blocks) != 1:
            raise ValidationError("a repeat-forever block must be the only block")
        if self.frequency_hz <= 0:
            raise ValidationError("frequency must be positive")

    @property
    def is_constant_amplitude(self) -> bool:
        return len(self.blocks) == 1

    @property
    def period(self) -> float:
        if self.is_constant_amplitude:
            return math.inf
        return float(sum(b.cycles for b in self.blocks))

    def delta_sigma_at(self, n: float) -> float:
        """Stress range acting during cycle ``n`` (block of the half-open interval)."""
        if self.is_constant_amplitude:
            return self.blocks[0].delta_sigma
        pos = n % self.period
        acc = 0.0
        for b in self.blocks:
            acc += b.cycles
            if pos < acc:
                return b.delta_sigma
        return self.blocks[-1].delta_sigma

    def segments(self, n0: float, n1: float) -> Iterator[tuple[float, float, float]]:
        """Split ``[n0, n1]`` (either order) into runs of constant stress range.

        Yields ``(start, end, delta_sigma)`` walking from ``n0`` toward ``n1``.
        """
        if n0 == n1:
            return
        lo, hi = min(n0, n1), max(n0, n1)
        cuts = [lo, hi]
        if not self.is_constant_amplitude:
            P = self.period
            offsets = []
            acc = 0.0
            for b in self.blocks:
                offsets.append(acc)
                acc += b.cycles
            k = math.floor(lo / P)
            while k * P <= hi:
                for off in offsets:
                    c = k * P + off
                    if lo < c < hi:
                        cuts.append(c)
                k += 1
        cuts = sorted(set(cuts))
        pieces = [
            (a, b, self.delta_sigma_at(0.5 * (a + b))) for a, b in zip(cuts[:-1], cuts[1:])
        ]
        if n1 < n0:
            pieces = [(b, a, ds) for a, b, ds in reversed(pieces)]
        yield from pieces


def constant_amplitude(sigma_max: float = 100.21, sigma_min: float = 4.77,
                       frequency_hz: float = 5.0) -> LoadingSpec:
    return LoadingSpec((LoadBlock(sigma_max, sigma_min, None),), frequency_hz)


def variable_amplitude(frequency_hz: float = 5.0) -> LoadingSpec:
    """500 cycles at 90 MPa peak then 500 at 100.21 MPa, both down to 4.77 MPa."""
    return LoadingSpec(
        (LoadBlock(90.0, 4.77, 500), LoadBlock(100.21, 4.77, 500)), frequency_hz
    )
