"""Windowed bidirectional LSTM over boundary representations, plus training.

The sequence model sees ``w_t`` consecutive boundary representations at a
time; windows advance by ``w_t // 2`` and the last one is right-aligned to
the tail. Probabilities from overlapping windows are averaged.

LSTM gate layout (frozen): each direction has one weight matrix of shape
(4h, input_dim + h) acting on ``[x_t, h_{t-1}]`` and a bias of shape (4h,),
rows ordered input, forget, output, candidate. The output head maps
``[h_fwd_t, h_bwd_t]`` (2h) to one logit.

Backpropagation is written by hand; :func:`gradient_check` compares it with
central finite differences.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bnet import BNetParams, bnet_backward, bnet_forward, movie_clips
from .data import MovieManifest

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-7


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class SeqParams:
    input_dim: int
    hidden: int
    w_t: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden size must be >= 1")
        if self.w_t < 2 or self.w_t % 2:
            raise ValueError(f"w_t must be even and >= 2, got {self.w_t}")

    def copy(self) -> "SeqParams":
        return SeqParams(self.input_dim, self.hidden, self.w_t,
                         {k: v.copy() for k, v in self.tensors.items()})

    def meta(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": self.hidden, "w_t": self.w_t}


def init_seq_params(input_dim: int, hidden: int = 16, w_t: int = 10, seed: int = 0) -> SeqParams:
    rng = np.random.default_rng(seed)
    p = SeqParams(input_dim, hidden, w_t)
    fan_in = input_dim + hidden
    for d in ("fwd", "bwd"):
        p.tensors[f"{d}.w"] = rng.standard_normal((4 * hidden, fan_in)) / np.sqrt(fan_in)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0  # forget gate open at start
        p.tensors[f"{d}.b"] = b
    p.tensors["head.w"] = rng.standard_normal(2 * hidden) / np.sqrt(2 * hidden)
    p.tensors["head.b"] = np.zeros(1)
    return p


# ---------------------------------------------------------------- LSTM


def _lstm_dir(x, W, b, h):
    T = x.shape[0]
    hs = np.zeros((T + 1, h))
    cs = np.zeros((T + 1, h))
    gates = np.zeros((T, 4 * h))
    for t in range(T):
        z = W @ np.concatenate([x[t], hs[t]]) + b
        g = np.empty_like(z)
        g[:3 * h] = sigmoid(z[:3 * h])
        g[3 * h:] = np.tanh(z[3 * h:])
        gates[t] = g
        cs[t + 1] = g[h:2 * h] * cs[t] + g[:h] * g[3 * h:]
        hs[t + 1] = g[2 * h:3 * h] * np.tanh(cs[t + 1])
    return hs, cs, gates


def _lstm_dir_backward(x, W, h, hs, cs, gates, dh_out):
    T = x.shape[0]
    dW = np.zeros_like(W)
    db = np.zeros(4 * h)
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    dx = np.zeros_like(x)
    for t in reversed(range(T)):
        g = gates[t]
        i, f, o, c_hat = g[:h], g[h:2 * h], g[2 * h:3 * h], g[3 * h:]
        tc = np.tanh(cs[t + 1])
        dh = dh_out[t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1 - tc * tc)
        di = dc * c_hat
        df = dc * cs[t]
        dch = dc * i
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), do * o * (1 - o),
                             dch * (1 - c_hat * c_hat)])
        dW += np.outer(dz, np.concatenate([x[t], hs[t]]))
        db += dz
        dxh = W.T @ dz
        dx[t] = dxh[:x.shape[1]]
        dh_next = dxh[x.shape[1]:]
        dc_next = dc * f
    return dW, db, dx


def window_forward(x: np.ndarray, params: SeqParams, return_cache=False):
    """Logits for one window of boundary representations, shape (T,)."""
    if x.shape[1] != params.input_dim:
        raise ValueError(f"boundary representation dim {x.shape[1]} != {params.input_dim}")
    t, h = params.tensors, params.hidden
    f = _lstm_dir(x, t["fwd.w"], t["fwd.b"], h)
    r = _lstm_dir(x[::-1], t["bwd.w"], t["bwd.b"], h)
    H = np.concatenate([f[0][1:], r[0][1:][::-1]], axis=1)
    logits = H @ t["head.w"] + t["head.b"][0]
    if return_cache:
        return logits, (x, f, r, H)
    return logits


def window_backward(d_logits, cache, params: SeqParams):
    """Gradients w.r.t. sequence tensors and w.r.t. the window input."""
    x, f, r, H = cache
    t, h = params.tensors, params.hidden
    grads = {"head.w": H.T @ d_logits, "head.b": np.array([d_logits.sum()])}
    dH = np.outer(d_logits, t["head.w"])
    dWf, dbf, dxf = _lstm_dir_backward(x, t["fwd.w"], h, *f, dH[:, :h])
    dWr, dbr, dxr = _lstm_dir_backward(x[::-1], t["bwd.w"], h, *r, dH[::-1, h:])
    grads.update({"fwd.w": dWf, "fwd.b": dbf, "bwd.w": dWr, "bwd.b": dbr})
    return grads, dxf + dxr[::-1]


def window_starts(length: int, w_t: int) -> list[int]:
    """Start offsets of the sliding windows covering ``length`` positions."""
    if length <= w_t:
        return [0]
    stride = w_t // 2
    starts = list(range(0, length - w_t + 1, stride))
    if starts[-1] + w_t < length:
        starts.append(length - w_t)
    return starts


def coarse_scores(b: np.ndarray, params: SeqParams) -> np.ndarray:
    """Per-boundary probabilities p_i for a movie's (n-1, dim) representations."""
    b = np.asarray(b, dtype=np.float64)
    L = b.shape[0]
    if L < 1:
        raise ValueError("need at least one boundary")
    acc = np.zeros(L)
    cnt = np.zeros(L)
    for s in window_starts(L, params.w_t):
        e = min(s + params.w_t, L)
        acc[s:e] += sigmoid(window_forward(b[s:e], params))
        cnt[s:e] += 1
    return acc / cnt


def binarize(p, tau: float = 0.5) -> np.ndarray:
    return (np.asarray(p) > tau).astype(np.int8)


def weighted_ce_loss(p, y, weights=(1.0, 9.0)) -> float:
    """Mean class-weighted binary cross-entropy; ``weights`` = (w_neg, w_pos)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    w0, w1 = weights
    p = np.clip(p, CLAMP_EPS, 1 - CLAMP_EPS)
    return float(np.mean(-(w1 * y * np.log(p) + w0 * (1 - y) * np.log(1 - p))))


def _loss_and_dlogits(logits, y, weights):
    p = sigmoid(logits)
    loss = weighted_ce_loss(p, y, weights)
    w0, w1 = weights
    inside = (p > CLAMP_EPS) & (p < 1 - CLAMP_EPS)
    d = (w0 * (1 - y) * p - w1 * y * (1 - p)) * inside / len(y)
    return loss, d


def window_loss_and_grads(clips, y, bnet: BNetParams, seq: SeqParams, weights=(1.0, 9.0)):
    """Loss of one window and gradients for every BNet and sequence tensor.

    Gradient keys are prefixed ``bnet/`` and ``seq/``.
    """
    b, bcache = bnet_forward(clips, bnet, return_cache=True)
    logits, scache = window_forward(b, seq, return_cache=True)
    loss, d_logits = _loss_and_dlogits(logits, np.asarray(y, dtype=np.float64), weights)
    sgrads, d_b = window_backward(d_logits, scache, seq)
    bgrads = bnet_backward(d_b, bcache, bnet)
    grads = {f"bnet/{k}": v for k, v in bgrads.items()}
    grads.update({f"seq/{k}": v for k, v in sgrads.items()})
    return loss, grads


def window_loss(clips, y, bnet: BNetParams, seq: SeqParams, weights=(1.0, 9.0)) -> float:
    logits = window_forward(bnet_forward(clips, bnet), seq)
    return weighted_ce_loss(sigmoid(logits), y, weights)


def predict_movie(m: MovieManifest, bnet: BNetParams, seq: SeqParams) -> np.ndarray:
    return coarse_scores(bnet_forward(movie_clips(m, bnet.w_b), bnet), seq)


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 30
    lr: float = 0.01
    lr_decay_epoch: int = 15
    lr_decay_factor: float = 0.1
    class_weights: tuple[float, float] = (1.0, 9.0)
    clip_norm: float = 5.0
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if min(self.class_weights) <= 0:
            raise ValueError("class weights must be > 0")

    def lr_at(self, epoch: int) -> float:
        return self.lr * (self.lr_decay_factor if epoch >= self.lr_decay_epoch else 1.0)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in sorted(grads):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class NonFiniteLossError(FloatingPointError):
    pass


def _corpus_windows(corpus, w_b, w_t):
    clips, labels, windows = [], [], []
    for mi, m in enumerate(corpus):
        if m.gt_boundaries is None:
            raise ValueError(f"movie {m.movie_id!r} has no ground-truth boundaries")
        clips.append(movie_clips(m, w_b))
        labels.append(m.gt_vector().astype(np.float64))
        L = m.n_shots - 1
        for s in window_starts(L, w_t):
            windows.append((mi, s, min(s + w_t, L)))
    return clips, labels, windows


def train_pipeline(corpus: list[MovieManifest], bnet: BNetParams, seq: SeqParams,
                   cfg: TrainConfig | None = None, progress=None):
    """Jointly fit BNet and the sequence model, one window per update.

    Returns ``(bnet, seq, history)`` where ``history`` holds one row
    ``(epoch, mean_loss, lr)`` per epoch. Inputs are not modified.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if not corpus:
        raise ValueError("empty training corpus")
    bnet, seq = bnet.copy(), seq.copy()
    clips, labels, windows = _corpus_windows(corpus, bnet.w_b, seq.w_t)
    flat = {f"bnet/{k}": v for k, v in bnet.tensors.items()}
    flat.update({f"seq/{k}": v for k, v in seq.tensors.items()})
    opt = Adam(flat, cfg.betas, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(windows))
        total = 0.0
        for wi in order:
            mi, s, e = windows[wi]
            wclips = {k: v[s:e] for k, v in clips[mi].items()}
            loss, grads = window_loss_and_grads(wclips, labels[mi][s:e], bnet, seq,
                                                cfg.class_weights)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss in epoch {epoch}, movie {corpus[mi].movie_id!r}, "
                    f"boundaries [{s + 1}, {e}]")
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > cfg.clip_norm:
                scale = cfg.clip_norm / norm
                grads = {k: g * scale for k, g in grads.items()}
            opt.step(flat, grads, lr)
            total += loss
        mean = total / len(windows)
        history.append((epoch, mean, lr))
        log.info("epoch %d  mean_loss %.5f  lr %g", epoch, mean, lr)
        if progress is not None:
            progress(epoch, mean, lr)
    return bnet, seq, history


# ---------------------------------------------------------------- gradient check


def gradient_check(bnet: BNetParams, seq: SeqParams, clips, y, eps=1e-4,
                   weights=(1.0, 9.0), corrupt=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every entry of every tensor is perturbed. ``corrupt`` may rewrite the
    analytic gradient dict before comparison (used for negative controls).
    """
    bnet, seq = bnet.copy(), seq.copy()
    _, grads = window_loss_and_grads(clips, y, bnet, seq, weights)
    if corrupt is not None:
        grads = corrupt(grads)
    worst = 0.0
    for prefix, owner in (("bnet/", bnet), ("seq/", seq)):
        for name, tensor in owner.tensors.items():
            ga = grads[prefix + name]
            flat = tensor.reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + eps
                lp = window_loss(clips, y, bnet, seq, weights)
                flat[j] = old - eps
                lm = window_loss(clips, y, bnet, seq, weights)
                flat[j] = old
                g_fd = (lp - lm) / (2 * eps)
                g_a = ga.reshape(-1)[j]
                rel = abs(g_a - g_fd) / max(1e-8, abs(g_a) + abs(g_fd))
                worst = max(worst, rel)
    return worst
