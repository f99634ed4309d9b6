"""Deterministic synthetic scenes: non-overlapping disks plus a feature grid."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InfeasibleConfig
from .geometry import ciou
from .types import Circle

MAX_ATTEMPTS = 10_000
# positions and radii snap to 1/16 px so the JSON text round-trips exactly
QUANTUM = 1.0 / 16.0


@dataclass(frozen=True)
class GenConfig:
    height: int = 64
    width: int = 64
    n_min: int = 5
    n_max: int = 5
    r_min: float = 4.0
    r_max: float = 8.0
    max_overlap_ciou: float = 0.1
    seed: int = 0
    depth: int = 8
    noise_sigma: float = 2.0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("image size must be positive")
        if not 0 <= self.n_min <= self.n_max:
            raise ValueError("need 0 <= n_min <= n_max")
        if not 0 < self.r_min <= self.r_max:
            raise ValueError("need 0 < r_min <= r_max")
        if not 0 <= self.max_overlap_ciou < 1:
            raise ValueError("max_overlap_ciou must lie in [0, 1)")
        if self.depth < 2 or self.depth % 2:
            raise ValueError("feature depth must be even and at least 2")

    @classmethod
    def from_dict(cls, data: dict) -> GenConfig:
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SceneTruth:
    image_id: int
    height: int
    width: int
    circles: list = field(default_factory=list)
    masks: np.ndarray = None  # n x H x W, bool

    def normalized_circles(self) -> list[Circle]:
        s = min(self.height, self.width)
        return [Circle(c.x / self.width, c.y / self.height, c.r / s) for c in self.circles]


def rasterize_disk(c: Circle, height: int, width: int) -> np.ndarray:
    """Pixel ``(i, j)`` is set iff its center ``(j + 0.5, i + 0.5)`` lies in the closed disk."""
    jj = np.arange(width) + 0.5
    ii = np.arange(height) + 0.5
    return (jj[None, :] - c.x) ** 2 + (ii[:, None] - c.y) ** 2 <= c.r * c.r


def _snap(v: float) -> float:
    return round(v / QUANTUM) * QUANTUM


def _place_circles(cfg: GenConfig, rng: np.random.Generator) -> list[Circle]:
    n = int(rng.integers(cfg.n_min, cfg.n_max + 1))
    circles: list[Circle] = []
    attempts = 0
    while len(circles) < n:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise InfeasibleConfig(f"placed {len(circles)} of {n} circles in {MAX_ATTEMPTS} attempts")
        r = _snap(rng.uniform(cfg.r_min, cfg.r_max))
        lo_x, hi_x = r + 1.0, cfg.width - r - 1.0
        lo_y, hi_y = r + 1.0, cfg.height - r - 1.0
        if r <= 0 or lo_x > hi_x or lo_y > hi_y:
            continue
        c = Circle(_snap(rng.uniform(lo_x, hi_x)), _snap(rng.uniform(lo_y, hi_y)), r)
        if c.x - r < 1.0 or c.x + r > cfg.width - 1.0 or c.y - r < 1.0 or c.y + r > cfg.height - 1.0:
            continue
        if all(ciou(c, other) <= cfg.max_overlap_ciou for other in circles):
            circles.append(c)
    return circles


def generate_scene(cfg: GenConfig, image_id: int = 0) -> tuple[SceneTruth, np.ndarray]:
    """Scene ``image_id`` of a dataset; a pure function of ``(cfg, image_id)``.

    Returns the truth and an ``H x W x depth`` float32 grid whose channel 0
    counts covering disks and whose other channels are smoothed noise.
    """
    rng = np.random.default_rng([cfg.seed, image_id])
    circles = _place_circles(cfg, rng)
    h, w = cfg.height, cfg.width
    masks = np.zeros((len(circles), h, w), dtype=bool)
    for k, c in enumerate(circles):
        masks[k] = rasterize_disk(c, h, w)

    grid = np.empty((h, w, cfg.depth), dtype=np.float32)
    grid[:, :, 0] = masks.sum(axis=0)
    for ch in range(1, cfg.depth):
        grid[:, :, ch] = gaussian_filter(rng.standard_normal((h, w)), cfg.noise_sigma, mode="nearest")
    return SceneTruth(image_id, h, w, circles, masks), grid


def min_margin(scene: SceneTruth) -> float:
    if not scene.circles:
        return math.inf
    return min(min(c.x - c.r, c.y - c.r, scene.width - c.x - c.r, scene.height - c.y - c.r) for c in scene.circles)
