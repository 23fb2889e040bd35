"""Boundary network: turns the 2*w_b shots around a boundary into a vector.

For every modality there are two branches. The difference branch embeds the
w_b shots before and the w_b shots after the boundary with two separate
full-window temporal convolutions and multiplies the embeddings elementwise
(or takes their dot product when ``inner="scalar"``). The relation branch
slides a kernel of ``rel_kernel`` shots over the whole clip and max-pools the
responses over time. Outputs of all modalities are concatenated, modality
order preserved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import MovieManifest

ACTIVATIONS = ("relu", "tanh", "identity")


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class BNetParams:
    modality_dims: dict[str, int]
    e_m: int
    w_b: int
    rel_kernel: int
    activation: str = "relu"
    inner: str = "elementwise"
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.w_b < 1 or self.e_m < 1:
            raise ValueError("w_b and e_m must be >= 1")
        if not 1 <= self.rel_kernel <= 2 * self.w_b:
            raise ValueError(f"rel_kernel must lie in [1, {2 * self.w_b}]")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.inner not in ("elementwise", "scalar"):
            raise ValueError(f"unknown inner product variant {self.inner!r}")

    @property
    def diff_dim(self) -> int:
        return self.e_m if self.inner == "elementwise" else 1

    @property
    def out_dim(self) -> int:
        return len(self.modality_dims) * (self.diff_dim + self.e_m)

    def copy(self) -> "BNetParams":
        return BNetParams(dict(self.modality_dims), self.e_m, self.w_b, self.rel_kernel,
                          self.activation, self.inner,
                          {k: v.copy() for k, v in self.tensors.items()})

    def meta(self) -> dict:
        return {"modality_dims": self.modality_dims, "e_m": self.e_m, "w_b": self.w_b,
                "rel_kernel": self.rel_kernel, "activation": self.activation,
                "inner": self.inner}


def init_bnet_params(modality_dims, e_m=16, w_b=4, seed=0, rel_kernel=None,
                     activation="relu", inner="elementwise") -> BNetParams:
    rng = np.random.default_rng(seed)
    rel_kernel = w_b if rel_kernel is None else rel_kernel
    p = BNetParams(dict(modality_dims), e_m, w_b, rel_kernel, activation, inner)
    for mod, d in modality_dims.items():
        for name, width in (("before", w_b), ("after", w_b), ("rel", rel_kernel)):
            fan_in = width * d
            p.tensors[f"{mod}.{name}.w"] = rng.standard_normal((e_m, fan_in)) / np.sqrt(fan_in)
            p.tensors[f"{mod}.{name}.b"] = np.zeros(e_m)
    return p


def clip_indices(n_shots: int, w_b: int) -> np.ndarray:
    """(n-1, 2*w_b) shot indices of every boundary's clip, edge-replicated."""
    i = np.arange(1, n_shots)[:, None]
    offs = np.arange(-w_b, w_b)[None, :]
    return np.clip(i + offs, 0, n_shots - 1)


def movie_clips(m: MovieManifest, w_b: int) -> dict[str, np.ndarray]:
    """Per modality, a (n-1, 2*w_b, d) float64 array of boundary clips."""
    idx = clip_indices(m.n_shots, w_b)
    return {mod: m.feature_matrix(mod).astype(np.float64)[idx] for mod in m.modality_dims}


def bnet_forward(clips: dict[str, np.ndarray], params: BNetParams, return_cache=False):
    """Boundary representations for a batch of clips.

    ``clips[mod]`` has shape (B, 2*w_b, d_mod); a single clip may be passed
    with shape (2*w_b, d_mod). Returns (B, out_dim), or (out_dim,) for a
    single clip.
    """
    single = False
    w_b, k = params.w_b, params.rel_kernel
    blocks, cache = [], {}
    for mod, d in params.modality_dims.items():
        if mod not in clips:
            raise ValueError(f"clip has no {mod!r} features")
        x = np.asarray(clips[mod], dtype=np.float64)
        if x.ndim == 2:
            single, x = True, x[None]
        if x.shape[1:] != (2 * w_b, d):
            raise ValueError(f"{mod}: clip shape {x.shape[1:]} != {(2 * w_b, d)}")
        B = x.shape[0]
        t = params.tensors
        xb = x[:, :w_b].reshape(B, -1)
        xa = x[:, w_b:].reshape(B, -1)
        zb = xb @ t[f"{mod}.before.w"].T + t[f"{mod}.before.b"]
        za = xa @ t[f"{mod}.after.w"].T + t[f"{mod}.after.b"]
        hb, ha = _act(zb, params.activation), _act(za, params.activation)
        diff = hb * ha
        if params.inner == "scalar":
            diff = diff.sum(axis=1, keepdims=True)
        P = 2 * w_b - k + 1
        xr = np.stack([x[:, p:p + k].reshape(B, -1) for p in range(P)], axis=1)
        zr = xr @ t[f"{mod}.rel.w"].T + t[f"{mod}.rel.b"]
        hr = _act(zr, params.activation)
        arg = hr.argmax(axis=1)
        rel = np.take_along_axis(hr, arg[:, None, :], axis=1)[:, 0]
        blocks += [diff, rel]
        if return_cache:
            cache[mod] = (xb, xa, zb, za, hb, ha, xr, zr, hr, arg)
    out = np.concatenate(blocks, axis=1)
    if single:
        out = out[0]
    return (out, cache) if return_cache else out


def bnet_backward(d_out: np.ndarray, cache, params: BNetParams) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every BNet tensor, given dL/d(output)."""
    grads = {}
    off = 0
    dd, e = params.diff_dim, params.e_m
    act = params.activation
    for mod in params.modality_dims:
        xb, xa, zb, za, hb, ha, xr, zr, hr, arg = cache[mod]
        g_diff = d_out[:, off:off + dd]
        g_rel = d_out[:, off + dd:off + dd + e]
        off += dd + e
        if params.inner == "scalar":
            g_diff = np.broadcast_to(g_diff, hb.shape)
        dzb = g_diff * ha * _act_grad(zb, hb, act)
        dza = g_diff * hb * _act_grad(za, ha, act)
        grads[f"{mod}.before.w"] = dzb.T @ xb
        grads[f"{mod}.before.b"] = dzb.sum(axis=0)
        grads[f"{mod}.after.w"] = dza.T @ xa
        grads[f"{mod}.after.b"] = dza.sum(axis=0)
        dhr = np.zeros_like(hr)
        np.put_along_axis(dhr, arg[:, None, :], g_rel[:, None, :], axis=1)
        dzr = dhr * _act_grad(zr, hr, act)
        grads[f"{mod}.rel.w"] = np.einsum("bpe,bpk->ek", dzr, xr)
        grads[f"{mod}.rel.b"] = dzr.sum(axis=(0, 1))
    return grads


def movie_boundary_representations(m: MovieManifest, params: BNetParams) -> np.ndarray:
    """(n-1, out_dim) boundary representations for a whole movie."""
    return bnet_forward(movie_clips(m, params.w_b), params)
