"""Toy multistream denoiser with ray-modulated cross-attention.

Each view is a stream of ``P`` tokens (a coarse ray-map grid).  All streams
share the same weights.  Streams only exchange information in the
cross-attention of each block, where stream ``i``:

* queries with its own canonical rays (its ray map expressed in its own camera
  frame, so intrinsics only),
* keys with every stream's rays expressed in stream ``i``'s camera frame,
* reads values projected from every stream's features.

Because stream ``i`` only ever sees poses relative to its own camera, the
output is invariant to global rigid motions of the scene; because attention
pools over an unordered set of tokens, it is permutation equivariant.

Parameter shapes, for value dim ``D``, features ``F``, ``L`` blocks, ``T``
steps and ``C = 12 K`` ray channels::

    w_in (D, F)  b_in (F,)  time_table (T+1, F)
    per block: w_mix (F, F)  b_mix (F,)  w_q (C, F)  w_k (C, F)  w_kf (F, F)  w_v (F, F)
    w_out (F, D)  b_out (D,)

so the count is ``2 D F + F + D + (T+1) F + L (3 F^2 + F + 2 C F)``.
Random weights are ``N(0, 1/fan_in)``, biases ``N(0, 0.1^2)``; the time table is
the fixed sinusoidal embedding.

Text dump format (one field per line, in the order above, blocks in order)::

    toy-set-denoiser 1
    config <value_dim> <feature_dim> <num_blocks> <T> <num_frequencies> <seed>
    <name> <ndim> <shape...> : <values, repr floats, space separated>
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .diffusion import ViewState
from .geometry import Camera, RayMap, build_ray_map, canonicalize_set, fourier_encode

BLOCK_FIELDS = ("w_mix", "b_mix", "w_q", "w_k", "w_kf", "w_v")
MAGIC = "toy-set-denoiser 1"


@dataclass(frozen=True)
class ToyDenoiserParams:
    value_dim: int
    feature_dim: int
    num_blocks: int
    T: int
    num_frequencies: int
    seed: int
    w_in: np.ndarray
    b_in: np.ndarray
    time_table: np.ndarray
    blocks: tuple
    w_out: np.ndarray
    b_out: np.ndarray

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [("w_in", self.w_in), ("b_in", self.b_in), ("time_table", self.time_table)]
        for n, blk in enumerate(self.blocks):
            out += [(f"block{n}.{k}", blk[k]) for k in BLOCK_FIELDS]
        out += [("w_out", self.w_out), ("b_out", self.b_out)]
        return out

    @property
    def num_parameters(self) -> int:
        return sum(a.size for _, a in self.arrays())


def sinusoidal_table(T: int, dim: int) -> np.ndarray:
    t = np.arange(T + 1, dtype=float)[:, None]
    half = (dim + 1) // 2
    freq = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    arg = t * freq
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)[:, :dim]


def parameter_count(value_dim: int, feature_dim: int, num_blocks: int, T: int, num_frequencies: int) -> int:
    D, F, L, C = value_dim, feature_dim, num_blocks, 12 * num_frequencies
    return 2 * D * F + F + D + (T + 1) * F + L * (3 * F * F + F + 2 * C * F)


def init_toy_denoiser(
    feature_dim: int = 16,
    num_blocks: int = 2,
    T: int = 1000,
    seed: int = 0,
    value_dim: int = 4,
    num_frequencies: int = 4,
    zero: bool = False,
) -> ToyDenoiserParams:
    if min(feature_dim, num_blocks, T, value_dim, num_frequencies) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    D, F, C = value_dim, feature_dim, 12 * num_frequencies

    def w(shape):
        if zero:
            return np.zeros(shape)
        return rng.standard_normal(shape) / math.sqrt(shape[0])

    def b(n):
        return np.zeros(n) if zero else 0.1 * rng.standard_normal(n)

    w_in, b_in = w((D, F)), b(F)
    blocks = []
    for _ in range(num_blocks):
        blocks.append(
            {"w_mix": w((F, F)), "b_mix": b(F), "w_q": w((C, F)), "w_k": w((C, F)), "w_kf": w((F, F)), "w_v": w((F, F))}
        )
    w_out, b_out = w((F, D)), b(D)
    table = np.zeros((T + 1, F)) if zero else sinusoidal_table(T, F)
    return ToyDenoiserParams(D, F, num_blocks, T, num_frequencies, seed, w_in, b_in, table, tuple(blocks), w_out, b_out)


def _softmax(x: np.ndarray) -> np.ndarray:
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def forward_all(
    params: ToyDenoiserParams,
    views: Sequence[ViewState],
    ray_maps: Sequence[RayMap],
    num_frequencies: int | None = None,
    keys_from_features: bool = False,
) -> np.ndarray:
    """Estimates for every stream, conditioning or not: ``(N, D)``."""
    K = num_frequencies or params.num_frequencies
    if K != params.num_frequencies:
        raise ValueError(f"parameters expect {params.num_frequencies} frequencies, got {K}")
    N = len(views)
    if len(ray_maps) != N:
        raise ValueError("need one ray map per view")
    P = ray_maps[0].shape[0] * ray_maps[0].shape[1]
    if any(m.shape[0] * m.shape[1] != P for m in ray_maps):
        raise ValueError("all ray maps need the same token count")
    for v in views:
        if np.shape(v.value)[-1] != params.value_dim:
            raise ValueError("value dimension does not match parameters")
        if not 0 <= v.time <= params.T:
            raise ValueError(f"time {v.time} outside [0, {params.T}]")

    # enc[i, j]: stream j's rays in stream i's frame, (N, N, P, C)
    enc = np.empty((N, N, P, 12 * K))
    for i in range(N):
        for j, m in enumerate(canonicalize_set(ray_maps, i)):
            enc[i, j] = fourier_encode(m, K).grid.reshape(P, -1)
    ref = enc[np.arange(N), np.arange(N)]  # (N, P, C)

    vals = np.stack([np.asarray(v.value, dtype=float) for v in views])  # (N, D)
    h = vals @ params.w_in + params.b_in + params.time_table[[v.time for v in views]]
    f = np.repeat(h[:, None, :], P, axis=1)  # (N, P, F)
    F = params.feature_dim
    for blk in params.blocks:
        f = f + np.tanh(f @ blk["w_mix"] + blk["b_mix"])
        q = ref @ blk["w_q"]  # (N, P, F)
        k = enc @ blk["w_k"]  # (N, N, P, F)
        if keys_from_features:
            k = k + (f @ blk["w_kf"])[None]
        vv = f @ blk["w_v"]  # (N, P, F)
        logits = np.einsum("ipf,ijqf->ipjq", q, k) / math.sqrt(F)
        attn = _softmax(logits.reshape(N, P, N * P)).reshape(N, P, N, P)
        f = f + np.einsum("ipjq,jqf->ipf", attn, vv)
    pooled = f.mean(axis=1)
    return pooled @ params.w_out + params.b_out


def forward(
    params: ToyDenoiserParams,
    views: Sequence[ViewState],
    ray_maps: Sequence[RayMap],
    num_frequencies: int | None = None,
    keys_from_features: bool = False,
) -> list[np.ndarray]:
    """Noise estimates for the views with ``time > 0``, in input order."""
    out = forward_all(params, views, ray_maps, num_frequencies, keys_from_features)
    return [out[n] for n, v in enumerate(views) if v.time != 0]


def token_camera(camera: Camera, grid: tuple[int, int] = (2, 2)) -> Camera:
    """Same pose and field of view, resampled to a ``rows x cols`` token grid."""
    rows, cols = grid
    sx, sy = cols / camera.width, rows / camera.height
    K = camera.intrinsics
    return Camera.from_params(
        K[0, 0] * sx, K[1, 1] * sy, K[0, 2] * sx, K[1, 2] * sy, cols, rows,
        camera.rotation, camera.translation, id=camera.id,
    )


class ToySetDenoiser:
    """Adapter giving the toy network the ``denoiser(views, cameras)`` contract.

    Values must be unbatched ``(D,)`` vectors.
    """

    def __init__(self, params: ToyDenoiserParams, grid=(2, 2), keys_from_features: bool = False):
        self.params = params
        self.grid = tuple(grid)
        self.keys_from_features = keys_from_features

    def __call__(self, views, cameras):
        maps = [build_ray_map(token_camera(c, self.grid)) for c in cameras]
        return forward(self.params, views, maps, keys_from_features=self.keys_from_features)


def dump_params(params: ToyDenoiserParams, path=None) -> str:
    lines = [
        MAGIC,
        f"config {params.value_dim} {params.feature_dim} {params.num_blocks} {params.T} "
        f"{params.num_frequencies} {params.seed}",
    ]
    for name, arr in params.arrays():
        shape = " ".join(str(s) for s in arr.shape)
        vals = " ".join(repr(float(x)) for x in arr.reshape(-1))
        lines.append(f"{name} {arr.ndim} {shape} : {vals}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_params(text_or_path) -> ToyDenoiserParams:
    text = str(text_or_path)
    if "\n" not in text:
        text = Path(text).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise ValueError("not a toy denoiser parameter dump")
    cfg = lines[1].split()
    if cfg[0] != "config" or len(cfg) != 7:
        raise ValueError("bad config line")
    D, F, L, T, K, seed = (int(x) for x in cfg[1:])
    arrays = {}
    for line in lines[2:]:
        head, _, body = line.partition(" : ")
        parts = head.split()
        name, ndim = parts[0], int(parts[1])
        shape = tuple(int(s) for s in parts[2 : 2 + ndim])
        vals = np.array([float(x) for x in body.split()]) if body.strip() else np.zeros(0)
        arrays[name] = vals.reshape(shape)
    blocks = tuple({k: arrays[f"block{n}.{k}"] for k in BLOCK_FIELDS} for n in range(L))
    return ToyDenoiserParams(
        D, F, L, T, K, seed, arrays["w_in"], arrays["b_in"], arrays["time_table"],
        blocks, arrays["w_out"], arrays["b_out"],
    )
