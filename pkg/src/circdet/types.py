"""Value types shared by the kernels and the independent oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidAssignment, InvalidCircle


@dataclass(frozen=True)
class Circle:
    """Center ``(x, y)`` and radius ``r``.

    Construction does not validate; operations that need a proper circle
    call :func:`validate_circle` and raise :class:`InvalidCircle`.
    """

    x: float
    y: float
    r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.r], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> Circle:
        x, y, r = (float(v) for v in values)
        return cls(x, y, r)

    def translated(self, dx: float, dy: float) -> Circle:
        return Circle(self.x + dx, self.y + dy, self.r)

    def scaled(self, s: float) -> Circle:
        return Circle(self.x * s, self.y * s, self.r * s)


def validate_circle(c: Circle) -> None:
    if not (math.isfinite(c.x) and math.isfinite(c.y) and math.isfinite(c.r)):
        raise InvalidCircle(f"non-finite circle {c}")
    if c.r <= 0:
        raise InvalidCircle(f"radius must be positive, got {c.r}")


@dataclass(frozen=True)
class Assignment:
    """Matched ``(gt_index, pred_index)`` pairs, sorted by ground-truth index."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple(sorted((int(g), int(p)) for g, p in self.pairs))
        gts = [g for g, _ in pairs]
        preds = [p for _, p in pairs]
        if len(set(gts)) != len(gts) or len(set(preds)) != len(preds):
            raise InvalidAssignment(f"indices repeat within a side: {pairs}")
        if any(i < 0 for i in gts + preds):
            raise InvalidAssignment(f"negative index in {pairs}")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def pred_for(self) -> dict[int, int]:
        return dict(self.pairs)

    def total(self, cost) -> float:
        cost = np.asarray(cost, dtype=np.float64)
        return float(sum(cost[g, p] for g, p in self.pairs))
