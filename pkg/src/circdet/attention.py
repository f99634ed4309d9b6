"""Circle-query decoder mechanics.

Anchors are normalized circles ``(x, y, r)`` in ``(0, 1)^3``. Pixel
coordinates follow the half-pixel convention: normalized ``x`` maps to
``x * W - 0.5`` so that cell ``j`` sits at ``(j + 0.5) / W``. Radii are
denormalized with ``min(H, W)`` to keep circles round on non-square grids.

Matrices act on row vectors (``x @ W``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidCircle, NonNormalizedAttention, ShapeError
from .types import Circle

PE_TEMPERATURE = 20.0
ANCHOR_EPS = 1e-5
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

# refined coordinates are kept strictly inside (0, 1) even when sigmoid saturates
_OPEN_LO = np.finfo(np.float64).tiny
_OPEN_HI = np.nextafter(1.0, 0.0)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = 1.0 / (1.0 + np.exp(-np.clip(z, -700.0, 700.0)))
    return float(out) if out.ndim == 0 else out


def inverse_sigmoid(t, eps: float = ANCHOR_EPS):
    """Log-odds of ``t`` after clamping it to ``[eps, 1 - eps]``."""
    t = np.clip(np.asarray(t, dtype=np.float64), eps, 1.0 - eps)
    out = np.log(t / (1.0 - t))
    return float(out) if out.ndim == 0 else out


def _softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, eps: float = 1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


# ---------------------------------------------------------------------------
# data types


@dataclass
class MlpWeights:
    """Dense layers ``(weight[in, out], bias[out])`` with ReLU between them."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        checked = []
        prev = None
        for w, b in self.layers:
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer weight {w.shape} does not fit bias {b.shape}")
            if prev is not None and w.shape[0] != prev:
                raise ShapeError(f"layer input {w.shape[0]} does not chain from {prev}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("MLP weights must be finite")
            prev = w.shape[1]
            checked.append((w, b))
        self.layers = checked

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def __call__(self, x):
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != self.in_dim:
            raise ShapeError(f"MLP expects {self.in_dim} inputs, got {h.shape[-1]}")
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> MlpWeights:
        return cls([(np.zeros((a, b)), np.zeros(b)) for a, b in zip(dims[:-1], dims[1:])])

    @classmethod
    def random(cls, dims: Sequence[int], rng: np.random.Generator) -> MlpWeights:
        return cls([(_uniform_init(rng, (a, b), a), _uniform_init(rng, (b,), a)) for a, b in zip(dims[:-1], dims[1:])])


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, rounded to float32 so
    weights survive the tensor container unchanged."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32).astype(np.float64)


@dataclass
class FeatureGrid:
    """``H x W x D`` feature map standing in for encoder output."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"feature grid must be H x W x D with positive sizes, got {data.shape}")
        if data.shape[2] % 2:
            raise ShapeError(f"feature depth must be even, got {data.shape[2]}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature grid has non-finite values")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return self.data.shape[2]


@dataclass
class CircleQuery:
    content: np.ndarray
    anchor: Circle

    def __post_init__(self):
        self.content = np.asarray(self.content, dtype=np.float64).reshape(-1)
        a = self.anchor
        if not all(math.isfinite(v) and 0.0 < v < 1.0 for v in (a.x, a.y, a.r)):
            raise InvalidCircle(f"anchor must lie in (0, 1)^3, got {a}")


@dataclass
class DeformableParams:
    """Per-query parameters of deformable circle attention.

    ``value_proj`` is ``M x D x d``, ``output_proj`` is ``M x d x D``;
    ``attn``, ``dr`` and ``dtheta`` are ``M x K``.
    """

    value_proj: np.ndarray
    output_proj: np.ndarray
    attn: np.ndarray
    dr: np.ndarray
    dtheta: np.ndarray

    def __post_init__(self):
        self.value_proj = np.asarray(self.value_proj, dtype=np.float64)
        self.output_proj = np.asarray(self.output_proj, dtype=np.float64)
        self.attn = np.asarray(self.attn, dtype=np.float64)
        self.dr = np.asarray(self.dr, dtype=np.float64)
        self.dtheta = np.asarray(self.dtheta, dtype=np.float64)
        m, dim, d = self.value_proj.shape
        if dim != m * d:
            raise ShapeError(f"value projection {self.value_proj.shape} does not split D={dim} into {m} heads")
        if self.output_proj.shape != (m, d, dim):
            raise ShapeError(f"output projection must be {(m, d, dim)}, got {self.output_proj.shape}")
        mk = self.attn.shape
        if len(mk) != 2 or mk[0] != m or self.dr.shape != mk or self.dtheta.shape != mk:
            raise ShapeError("attention weights and offsets must all be M x K")
        worst = float(np.max(np.abs(self.attn.sum(axis=1) - 1.0)))
        if worst > 1e-6:
            raise NonNormalizedAttention(f"attention rows deviate from 1 by {worst:.3g}")

    @property
    def heads(self) -> int:
        return self.attn.shape[0]

    @property
    def points(self) -> int:
        return self.attn.shape[1]

    @property
    def dim(self) -> int:
        return self.value_proj.shape[1]


# ---------------------------------------------------------------------------
# positional encodings and query composition


def sinusoidal_pe(t, half_dim: int, temperature: float = PE_TEMPERATURE) -> np.ndarray:
    """Interleaved ``(sin, cos)`` pairs of ``t * 2*pi / temperature**(j/half_dim)``.

    Works elementwise on arrays; the encoding is the trailing axis.
    """
    if half_dim < 1:
        raise ValueError("half_dim must be at least 1")
    t = np.asarray(t, dtype=np.float64)
    omega = temperature ** (np.arange(half_dim) / half_dim)
    phase = t[..., None] * (2.0 * math.pi) / omega
    return np.stack([np.sin(phase), np.cos(phase)], axis=-1).reshape(*t.shape, 2 * half_dim)


def _quarter(dim: int) -> int:
    if dim % 4:
        raise ShapeError(f"model width must be a multiple of 4 for the coordinate encodings, got {dim}")
    return dim // 4


def pe_xy(x, y, dim: int, temperature: float = PE_TEMPERATURE) -> np.ndarray:
    q = _quarter(dim)
    return np.concatenate([sinusoidal_pe(x, q, temperature), sinusoidal_pe(y, q, temperature)], axis=-1)


def pe_circle(c: Circle, dim: int, temperature: float = PE_TEMPERATURE) -> np.ndarray:
    """Concatenated encodings of ``x``, ``y`` and ``r``; length ``3*dim/2``."""
    if not all(math.isfinite(v) for v in (c.x, c.y, c.r)):
        raise InvalidCircle(f"non-finite circle {c}")
    q = _quarter(dim)
    return np.concatenate([sinusoidal_pe(v, q, temperature) for v in (c.x, c.y, c.r)])


def positional_query(c: Circle, mlp: MlpWeights, temperature: float = PE_TEMPERATURE) -> np.ndarray:
    dim = mlp.out_dim
    if mlp.in_dim * 2 != dim * 3:
        raise ShapeError(f"positional MLP must map {3 * dim // 2} -> {dim}, got {mlp.in_dim} -> {dim}")
    return mlp(pe_circle(c, dim, temperature))


def self_attn_inputs(q: CircleQuery, mlp: MlpWeights, temperature: float = PE_TEMPERATURE):
    """Query, key and value vectors for self attention among circle queries."""
    p = positional_query(q.anchor, mlp, temperature)
    if p.shape != q.content.shape:
        raise ShapeError(f"content has {q.content.size} dims, positional query {p.size}")
    qk = q.content + p
    return qk, qk.copy(), q.content.copy()


def cross_attn_query(q: CircleQuery, csq_mlp: MlpWeights, dim: int, temperature: float = PE_TEMPERATURE) -> np.ndarray:
    """``[Z, PE(x, y) * csq(Z)]`` of length ``2*dim``."""
    if q.content.size != dim or csq_mlp.in_dim != dim or csq_mlp.out_dim != dim:
        raise ShapeError(f"cross-attention query needs D={dim} content and a D->D scale MLP")
    scale = csq_mlp(q.content)
    return np.concatenate([q.content, pe_xy(q.anchor.x, q.anchor.y, dim, temperature) * scale])


def grid_positions(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized cell-center coordinates, each shaped ``H x W``."""
    xs = (np.arange(width) + 0.5) / width
    ys = (np.arange(height) + 0.5) / height
    gx, gy = np.meshgrid(xs, ys)
    return gx, gy


def cross_attn_keys(F: FeatureGrid, temperature: float = PE_TEMPERATURE) -> tuple[np.ndarray, np.ndarray]:
    """Keys ``[F_xy, PE(x, y)]`` (``H x W x 2D``) and values ``F`` (``H x W x D``)."""
    gx, gy = grid_positions(F.height, F.width)
    data = F.data.astype(np.float64)
    keys = np.concatenate([data, pe_xy(gx, gy, F.depth, temperature)], axis=-1)
    return keys, data


def modulated_attention(key_pos, q: CircleQuery, r_ref: float, dim: int, query_scale=None,
                        temperature: float = PE_TEMPERATURE):
    """Radius-modulated positional score between key positions and the anchor center.

    ``key_pos`` is ``(x, y)`` or an array ``[..., 2]`` of normalized positions.
    The per-axis dot products are scaled by ``r_ref / r`` and ``1/sqrt(dim)``.
    ``query_scale`` (length ``dim``) optionally weights the anchor's encoding
    elementwise, as the content-conditioned scale of the dense decoder does.
    """
    r = q.anchor.r
    if not (math.isfinite(r) and r > 0):
        raise InvalidCircle(f"anchor radius must be positive, got {r}")
    key_pos = np.asarray(key_pos, dtype=np.float64)
    quarter = _quarter(dim)
    ref_x = sinusoidal_pe(q.anchor.x, quarter, temperature)
    ref_y = sinusoidal_pe(q.anchor.y, quarter, temperature)
    if query_scale is not None:
        query_scale = np.asarray(query_scale, dtype=np.float64)
        ref_x = ref_x * query_scale[: 2 * quarter]
        ref_y = ref_y * query_scale[2 * quarter :]
    dot_x = sinusoidal_pe(key_pos[..., 0], quarter, temperature) @ ref_x
    dot_y = sinusoidal_pe(key_pos[..., 1], quarter, temperature) @ ref_y
    base = (dot_x + dot_y) / math.sqrt(dim)
    out = (r_ref / r) * base
    return float(out) if np.ndim(out) == 0 else out


def reference_radius(c: Circle, mlp: MlpWeights) -> float:
    """Content-free reference radius ``sigmoid(MLP(x, y, r))`` in ``(0, 1)``."""
    if mlp.in_dim != 3 or mlp.out_dim != 1:
        raise ShapeError(f"reference-radius MLP must map 3 -> 1, got {mlp.in_dim} -> {mlp.out_dim}")
    return sigmoid(mlp(np.array([c.x, c.y, c.r]))[0])


# ---------------------------------------------------------------------------
# deformable circle attention


def cda_reference_init(mode: str, heads: int, points: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Initial polar offsets ``(dr, dtheta)``, each ``heads x points``.

    ``"cda-r"`` draws uniformly over the unit disk; ``"cda-c"`` lays the
    ``heads*points`` points out as a sunflower spiral and hands consecutive
    runs of ``points`` to each head.
    """
    mode = mode.lower()
    if heads < 1 or points < 1:
        raise ValueError("heads and points must be positive")
    if mode == "cda-r":
        rng = np.random.default_rng(seed)
        u = rng.uniform(size=(heads, points))
        v = rng.uniform(size=(heads, points))
        return np.sqrt(u), 2.0 * math.pi * v
    if mode == "cda-c":
        total = heads * points
        k = np.arange(total)
        dr = np.sqrt((k + 0.5) / total)
        dtheta = np.mod(k * GOLDEN_ANGLE, 2.0 * math.pi)
        return dr.reshape(heads, points), dtheta.reshape(heads, points)
    raise ValueError(f"unknown initialization {mode!r}; expected 'cda-r' or 'cda-c'")


def bilinear_sample(F: FeatureGrid, x, y) -> np.ndarray:
    """Bilinear lookup at pixel coordinates, clamped to the grid border.

    Accepts scalars or equally shaped arrays; returns ``[..., D]``.
    """
    data = F.data
    h, w = data.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    j0 = np.minimum(np.floor(x).astype(np.int64), w - 1)
    i0 = np.minimum(np.floor(y).astype(np.int64), h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    fx = (x - j0)[..., None]
    fy = (y - i0)[..., None]
    top = data[i0, j0] * (1.0 - fx) + data[i0, j1] * fx
    bottom = data[i1, j0] * (1.0 - fx) + data[i1, j1] * fx
    return top * (1.0 - fy) + bottom * fy


def anchor_center_pixels(anchor: Circle, height: int, width: int) -> tuple[float, float]:
    return anchor.x * width - 0.5, anchor.y * height - 0.5


def deformable_sample_points(anchor: Circle, r_ref, dr, dtheta, height: int, width: int) -> np.ndarray:
    """Pixel coordinates ``[..., 2]`` of the polar sampling locations.

    Each point is the anchor center plus ``dr * r_ref`` (denormalized by
    ``min(H, W)``) along angle ``dtheta``. Broadcasts over array inputs.
    """
    cx, cy = anchor_center_pixels(anchor, height, width)
    rho = np.asarray(dr, dtype=np.float64) * np.asarray(r_ref, dtype=np.float64) * min(height, width)
    dtheta = np.asarray(dtheta, dtype=np.float64)
    return np.stack([cx + rho * np.cos(dtheta), cy + rho * np.sin(dtheta)], axis=-1)


def circle_deformable_attention(q: CircleQuery, params: DeformableParams, r_ref: float, F: FeatureGrid) -> np.ndarray:
    """Attention-weighted, per-head projected samples around the anchor circle."""
    if q.content.size != params.dim or F.depth != params.dim:
        raise ShapeError(f"content ({q.content.size}), grid ({F.depth}) and projections ({params.dim}) disagree")
    pts = deformable_sample_points(q.anchor, r_ref, params.dr, params.dtheta, F.height, F.width)
    samples = bilinear_sample(F, pts[..., 0], pts[..., 1])  # M x K x D
    pooled = np.einsum("mk,mkc->mc", params.attn, samples)
    heads = np.einsum("mc,mcd->md", pooled, params.value_proj)
    return np.einsum("md,mde->e", heads, params.output_proj)


# ---------------------------------------------------------------------------
# anchor refinement


def _check_anchor(anchor: Circle) -> None:
    if not all(math.isfinite(v) and 0.0 < v < 1.0 for v in (anchor.x, anchor.y, anchor.r)):
        raise InvalidCircle(f"anchor must lie in (0, 1)^3, got {anchor}")


def refine_anchors(anchors, deltas) -> np.ndarray:
    """Vectorized refinement of ``[..., 3]`` anchors by log-odds offsets."""
    out = sigmoid(inverse_sigmoid(np.asarray(anchors, dtype=np.float64)) + np.asarray(deltas, dtype=np.float64))
    return np.clip(out, _OPEN_LO, _OPEN_HI)


def refine_anchor(anchor: Circle, delta) -> Circle:
    """Shift an anchor by ``(dx, dy, dr)`` in log-odds space."""
    _check_anchor(anchor)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (3,) or not np.all(np.isfinite(delta)):
        raise ValueError(f"delta must be three finite numbers, got {delta}")
    return Circle.from_array(refine_anchors(anchor.as_array(), delta))


def initial_anchors(n: int, radius: float = 0.1) -> list[Circle]:
    """``n`` anchors on a uniform grid of centers (row-major), all of one radius."""
    side = max(1, math.ceil(math.sqrt(n)))
    out = []
    for k in range(n):
        i, j = divmod(k, side)
        out.append(Circle((j + 0.5) / side, (i + 0.5) / side, radius))
    return out


# ---------------------------------------------------------------------------
# decoder weights and forward pass


@dataclass
class LayerWeights:
    self_q: np.ndarray
    self_k: np.ndarray
    self_v: np.ndarray
    self_o: np.ndarray
    cross_out: np.ndarray
    ffn: MlpWeights
    attn_proj: MlpWeights
    value_proj: np.ndarray
    output_proj: np.ndarray
    dr: np.ndarray
    dtheta: np.ndarray


@dataclass
class DecoderWeights:
    """Every block the decoder needs. Positional, reference-radius, delta and
    score heads are shared by all layers; attention blocks are per layer."""

    dim: int
    heads: int
    points: int
    pos_mlp: MlpWeights
    csq_mlp: MlpWeights
    rref_mlp: MlpWeights
    delta_mlp: MlpWeights
    score_head: MlpWeights
    query_content: np.ndarray
    layers: list = field(default_factory=list)
    temperature: float = PE_TEMPERATURE

    @property
    def n_queries(self) -> int:
        return self.query_content.shape[0]

    def initial_queries(self, radius: float = 0.1) -> list[CircleQuery]:
        anchors = initial_anchors(self.n_queries, radius)
        return [CircleQuery(z.copy(), a) for z, a in zip(self.query_content, anchors)]

    def zero_delta_head(self) -> DecoderWeights:
        dims = [self.delta_mlp.in_dim] + [w.shape[1] for w, _ in self.delta_mlp.layers]
        return replace(self, delta_mlp=MlpWeights.zeros(dims))

    # -- tensor container mapping -------------------------------------------------

    def to_tensors(self) -> dict[str, np.ndarray]:
        """Flatten into named 3-D tensors (see README for the key list)."""
        out: dict[str, np.ndarray] = {
            "meta": np.array([[[self.dim, self.heads, self.points, self.temperature]]], dtype=np.float64),
            "query.content": self.query_content[:, :, None],
        }
        for name in ("pos_mlp", "csq_mlp", "rref_mlp", "delta_mlp", "score_head"):
            _put_mlp(out, name, getattr(self, name))
        for l, lw in enumerate(self.layers):
            p = f"layer{l}."
            for name in ("self_q", "self_k", "self_v", "self_o", "cross_out"):
                out[p + name] = getattr(lw, name)[:, :, None]
            _put_mlp(out, p + "ffn", lw.ffn)
            _put_mlp(out, p + "attn_proj", lw.attn_proj)
            out[p + "value_proj"] = lw.value_proj
            out[p + "output_proj"] = lw.output_proj
            out[p + "dr"] = lw.dr[:, :, None]
            out[p + "dtheta"] = lw.dtheta[:, :, None]
        return out

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> DecoderWeights:
        t = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}
        try:
            dim, heads, points, temperature = t["meta"].reshape(-1)
            layers = []
            l = 0
            while f"layer{l}.self_q" in t:
                p = f"layer{l}."
                layers.append(LayerWeights(
                    self_q=t[p + "self_q"][:, :, 0],
                    self_k=t[p + "self_k"][:, :, 0],
                    self_v=t[p + "self_v"][:, :, 0],
                    self_o=t[p + "self_o"][:, :, 0],
                    cross_out=t[p + "cross_out"][:, :, 0],
                    ffn=_get_mlp(t, p + "ffn"),
                    attn_proj=_get_mlp(t, p + "attn_proj"),
                    value_proj=t[p + "value_proj"],
                    output_proj=t[p + "output_proj"],
                    dr=t[p + "dr"][:, :, 0],
                    dtheta=t[p + "dtheta"][:, :, 0],
                ))
                l += 1
            return cls(
                dim=int(dim), heads=int(heads), points=int(points), temperature=float(temperature),
                pos_mlp=_get_mlp(t, "pos_mlp"), csq_mlp=_get_mlp(t, "csq_mlp"), rref_mlp=_get_mlp(t, "rref_mlp"),
                delta_mlp=_get_mlp(t, "delta_mlp"), score_head=_get_mlp(t, "score_head"),
                query_content=t["query.content"][:, :, 0], layers=layers,
            )
        except KeyError as exc:
            raise ShapeError(f"weight bundle is missing tensor {exc}") from None


def _put_mlp(out: dict, prefix: str, mlp: MlpWeights) -> None:
    for k, (w, b) in enumerate(mlp.layers):
        out[f"{prefix}.{k}.weight"] = w[:, :, None]
        out[f"{prefix}.{k}.bias"] = b[None, :, None]


def _get_mlp(t: dict, prefix: str) -> MlpWeights:
    layers = []
    k = 0
    while f"{prefix}.{k}.weight" in t:
        layers.append((t[f"{prefix}.{k}.weight"][:, :, 0], t[f"{prefix}.{k}.bias"][0, :, 0]))
        k += 1
    if not layers:
        raise KeyError(f"{prefix}.0.weight")
    return MlpWeights(layers)


def init_decoder_weights(dim: int = 8, n_layers: int = 6, heads: int = 8, points: int = 4, n_queries: int = 100,
                         init: str = "cda-c", seed: int = 0) -> DecoderWeights:
    """Seeded weights; every block uses uniform ``+-1/sqrt(fan_in)`` init."""
    _quarter(dim)
    if dim % heads:
        raise ShapeError(f"D={dim} is not divisible by {heads} heads")
    rng = np.random.default_rng(seed)
    d = dim // heads

    def mat(a, b):
        return _uniform_init(rng, (a, b), a)

    layers = []
    for l in range(n_layers):
        dr, dtheta = cda_reference_init(init, heads, points, seed=seed * 1000 + l)
        # stored bundles are float32; keep seeded and reloaded weights identical
        dr, dtheta = dr.astype(np.float32).astype(np.float64), dtheta.astype(np.float32).astype(np.float64)
        layers.append(LayerWeights(
            self_q=mat(dim, dim), self_k=mat(dim, dim), self_v=mat(dim, dim), self_o=mat(dim, dim),
            cross_out=mat(dim, dim),
            ffn=MlpWeights.random([dim, 2 * dim, dim], rng),
            attn_proj=MlpWeights.random([dim, heads * points], rng),
            value_proj=_uniform_init(rng, (heads, dim, d), dim),
            output_proj=_uniform_init(rng, (heads, d, dim), d),
            dr=dr, dtheta=dtheta,
        ))
    return DecoderWeights(
        dim=dim, heads=heads, points=points,
        pos_mlp=MlpWeights.random([3 * dim // 2, dim, dim], rng),
        csq_mlp=MlpWeights.random([dim, dim, dim], rng),
        rref_mlp=MlpWeights.random([3, dim, 1], rng),
        delta_mlp=MlpWeights.random([dim, dim, 3], rng),
        score_head=MlpWeights.random([dim, 1], rng),
        query_content=rng.uniform(-1.0, 1.0, size=(n_queries, dim)).astype(np.float32).astype(np.float64),
        layers=layers,
    )


def self_attention(queries: Sequence[CircleQuery], pos_mlp: MlpWeights, layer: LayerWeights,
                   temperature: float = PE_TEMPERATURE) -> np.ndarray:
    """Single-head softmax attention among queries; returns ``N x D`` updates."""
    qkv = [self_attn_inputs(q, pos_mlp, temperature) for q in queries]
    qs = np.array([t[0] for t in qkv]) @ layer.self_q
    ks = np.array([t[1] for t in qkv]) @ layer.self_k
    vs = np.array([t[2] for t in qkv]) @ layer.self_v
    weights = _softmax(qs @ ks.T / math.sqrt(qs.shape[1]), axis=1)
    return (weights @ vs) @ layer.self_o


def dense_cross_attention(queries: Sequence[CircleQuery], r_refs: Sequence[float], F: FeatureGrid,
                          csq_mlp: MlpWeights, out_proj: np.ndarray, temperature: float = PE_TEMPERATURE) -> np.ndarray:
    """Softmax over every grid cell with logits ``Z.F/sqrt(D)`` plus the
    radius-modulated positional score (query encoding scaled by ``csq(Z)``)."""
    dim = F.depth
    values = F.data.reshape(-1, dim).astype(np.float64)
    gx, gy = grid_positions(F.height, F.width)
    key_pos = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=-1)
    out = np.empty((len(queries), dim))
    for i, (q, r_ref) in enumerate(zip(queries, r_refs)):
        if q.content.size != dim:
            raise ShapeError(f"query content has {q.content.size} dims, grid {dim}")
        content = values @ q.content / math.sqrt(dim)
        positional = modulated_attention(key_pos, q, r_ref, dim, csq_mlp(q.content), temperature)
        w = _softmax(content + positional)
        out[i] = w @ values
    return out @ out_proj


def deformable_cross_attention(queries: Sequence[CircleQuery], r_refs: Sequence[float], F: FeatureGrid,
                               layer: LayerWeights) -> np.ndarray:
    """Deformable circle attention per query; attention weights come from a
    linear map of the content, offsets are the layer's polar parameters."""
    heads, points = layer.dr.shape
    out = np.empty((len(queries), F.depth))
    for i, (q, r_ref) in enumerate(zip(queries, r_refs)):
        attn = _softmax(layer.attn_proj(q.content).reshape(heads, points), axis=1)
        params = DeformableParams(layer.value_proj, layer.output_proj, attn, layer.dr, layer.dtheta)
        out[i] = circle_deformable_attention(q, params, r_ref, F)
    return out


def decoder_layer_forward(queries: Sequence[CircleQuery], F: FeatureGrid, weights: DecoderWeights, layer_index: int,
                          variant: str = "deformable") -> tuple[list[CircleQuery], np.ndarray]:
    """One decoder layer: self attention, circle cross attention, FFN, then
    anchor refinement by the shared delta head.

    Returns the refined queries and the ``N x 3`` log-odds deltas.
    """
    if not queries:
        return [], np.zeros((0, 3))
    dim = weights.dim
    if F.depth != dim:
        raise ShapeError(f"feature depth {F.depth} does not match model width {dim}")
    layer = weights.layers[layer_index]
    t = weights.temperature

    z = np.array([q.content for q in queries])
    z = layer_norm(z + self_attention(queries, weights.pos_mlp, layer, t))
    mid = [CircleQuery(zi, q.anchor) for zi, q in zip(z, queries)]

    r_refs = [reference_radius(q.anchor, weights.rref_mlp) for q in mid]
    if variant == "dense":
        cross = dense_cross_attention(mid, r_refs, F, weights.csq_mlp, layer.cross_out, t)
    elif variant == "deformable":
        cross = deformable_cross_attention(mid, r_refs, F, layer)
    else:
        raise ValueError(f"unknown attention variant {variant!r}")
    z = layer_norm(z + cross)
    z = layer_norm(z + layer.ffn(z))

    deltas = weights.delta_mlp(z)
    new = [CircleQuery(zi, refine_anchor(q.anchor, di)) for zi, q, di in zip(z, queries, deltas)]
    return new, deltas


def run_decoder(queries: Sequence[CircleQuery], F: FeatureGrid, weights: DecoderWeights, n_layers: Optional[int] = None,
                variant: str = "deformable") -> tuple[list[CircleQuery], list[np.ndarray]]:
    """Stack ``n_layers`` decoder layers; returns final queries and the
    anchors (``N x 3``) after each layer."""
    n_layers = len(weights.layers) if n_layers is None else n_layers
    if n_layers > len(weights.layers):
        raise ShapeError(f"requested {n_layers} layers but weights define {len(weights.layers)}")
    history = []
    current = list(queries)
    for l in range(n_layers):
        current, _ = decoder_layer_forward(current, F, weights, l, variant)
        history.append(np.array([q.anchor.as_array() for q in current]))
    return current, history


def query_scores(queries: Sequence[CircleQuery], score_head: MlpWeights) -> np.ndarray:
    if not queries:
        return np.zeros(0)
    z = np.array([q.content for q in queries])
    return sigmoid(score_head(z)[:, 0])
