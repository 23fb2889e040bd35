"""Movie-level grouping of super shots into scenes.

A super shot is a run of consecutive shots represented by a weighted sum of
its shots' grouping features. A scene is a run of consecutive super shots
and scores

    g(scene) = sum over members C_l, in order, of
               alpha(|P_l|) * (mean_{u in P_l} cos(C_l, C_u) + sigmoid(max_{u in P_l} cos(C_l, C_u)))

where P_l holds the members strictly before C_l (``preceding=True``) or all
other members (``preceding=False``). Members with empty P_l contribute 0 and
``alpha(m) = exp(-m / beta)``, with ``beta = inf`` meaning no decay.

:func:`dp_optimal_partition` maximises the sum of scene scores over
contiguous partitions and scene counts; :func:`optimal_grouping` alternates
that search with gradient refinement of the super-shot weights and merges
super shots scene by scene.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import MovieManifest, atomic_write_text

BRUTE_FORCE_LIMIT = 12


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def grouping_features(m: MovieManifest) -> np.ndarray:
    """(n, D) concatenation of per-modality L2-normalised shot features."""
    blocks = []
    for mod in m.modality_dims:
        x = m.feature_matrix(mod).astype(np.float64)
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        blocks.append(np.divide(x, norms, out=np.zeros_like(x), where=norms > 0))
    return np.concatenate(blocks, axis=1)


def cosine(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def cosine_matrix(reps: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(reps, axis=1)
    unit = np.divide(reps, norms[:, None], out=np.zeros_like(reps), where=norms[:, None] > 0)
    c = unit @ unit.T
    np.clip(c, -1.0, 1.0, out=c)
    nz = norms > 0
    c[np.diag_indices_from(c)] = np.where(nz, 1.0, 0.0)
    return c


def decay(m, beta: float):
    if math.isinf(beta):
        return np.ones_like(np.asarray(m, dtype=float))
    return np.exp(-np.asarray(m, dtype=float) / beta)


# ---------------------------------------------------------------- super shots


@dataclass
class SuperShot:
    l: int
    r: int
    weights: np.ndarray

    def __post_init__(self):
        if self.l > self.r:
            raise ValueError(f"empty super shot [{self.l}, {self.r}]")
        if len(self.weights) != self.r - self.l + 1:
            raise ValueError("weight vector length does not match the shot range")

    @property
    def size(self) -> int:
        return self.r - self.l + 1


@dataclass
class SuperShotSet:
    """Ordered super shots over one movie's shot features ``shots`` (n, D)."""

    shots: np.ndarray
    items: list[SuperShot]
    reps: np.ndarray = field(init=False)
    cos: np.ndarray = field(init=False)

    def __post_init__(self):
        expect = 0
        for ss in self.items:
            if ss.l != expect:
                raise ValueError(f"super shots do not tile the movie at shot {expect}")
            expect = ss.r + 1
        if expect != len(self.shots):
            raise ValueError("super shots do not cover every shot")
        self.refresh()

    def __len__(self):
        return len(self.items)

    def refresh(self) -> None:
        self.reps = np.stack([ss.weights @ self.shots[ss.l:ss.r + 1] for ss in self.items])
        if not np.all(np.isfinite(self.reps)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(self.reps), axis=1))[0])
            raise FloatingPointError(f"non-finite representation for super shot {bad}")
        self.cos = cosine_matrix(self.reps)

    def boundaries(self) -> list[int]:
        """Boundary indices (1-based, following shot i) between super shots."""
        return [ss.r + 1 for ss in self.items[:-1]]

    def copy(self) -> "SuperShotSet":
        return SuperShotSet(self.shots, [SuperShot(s.l, s.r, s.weights.copy()) for s in self.items])

    @classmethod
    def from_cuts(cls, shots: np.ndarray, boundaries) -> "SuperShotSet":
        edges = [0] + sorted(int(b) for b in boundaries) + [len(shots)]
        items = [SuperShot(a, b - 1, np.full(b - a, 1.0 / (b - a))) for a, b in zip(edges, edges[1:])]
        return cls(shots, items)

    @classmethod
    def from_reps(cls, reps) -> "SuperShotSet":
        """One single-shot super shot per row; handy for toy instances."""
        reps = np.asarray(reps, dtype=np.float64)
        return cls(reps, [SuperShot(i, i, np.ones(1)) for i in range(len(reps))])


def initial_super_shots(shots, p, init_count: int) -> SuperShotSet:
    """Cut at the ``init_count - 1`` highest-scoring boundaries.

    ``shots`` is a manifest or an (n, D) grouping-feature array.
    """
    X = grouping_features(shots) if isinstance(shots, MovieManifest) else np.asarray(shots, float)
    n = len(X)
    p = np.asarray(p, dtype=float)
    if len(p) != n - 1:
        raise ValueError(f"expected {n - 1} boundary scores, got {len(p)}")
    if init_count < 1:
        raise ValueError("init_count must be >= 1")
    k = min(init_count, n) - 1
    # stable sort on -p keeps the lower index first among equal scores
    order = np.argsort(-p, kind="stable")[:k]
    return SuperShotSet.from_cuts(X, order + 1)


# ---------------------------------------------------------------- scores


def fs_score(ck, P) -> float:
    """Mean cosine between ``ck`` and the vectors in ``P``; 0 for empty P."""
    if len(P) == 0:
        return 0.0
    return float(np.mean([cosine(ck, c) for c in P]))


def ft_score(ck, P) -> float:
    """Sigmoid of the best cosine between ``ck`` and the vectors in ``P``; 0 for empty P."""
    if len(P) == 0:
        return 0.0
    return float(sigmoid(max(cosine(ck, c) for c in P)))


def scene_score(phi, beta: float = math.inf, preceding: bool = True) -> float:
    """Score of one scene given its members' representation vectors, in order."""
    phi = list(phi)
    total = 0.0
    for l, c in enumerate(phi):
        P = phi[:l] if preceding else phi[:l] + phi[l + 1:]
        if len(P) == 0:
            continue
        total += float(decay(len(P), beta)) * (fs_score(c, P) + ft_score(c, P))
    return total


def span_scores(cos: np.ndarray, beta: float = math.inf, preceding: bool = True,
                sizes=None) -> np.ndarray:
    """``G[s, e]`` = score of the scene made of super shots s..e (inclusive).

    With ``sizes`` (shots per super shot) the scene is scored shot by shot:
    every shot carries its super shot's representation and is compared with
    the shots before it in the scene. Entries with ``e < s`` are -inf.
    """
    N = len(cos)
    G = np.full((N, N), -np.inf)
    if sizes is not None:
        if not preceding:
            raise ValueError("shot-level scoring is defined for preceding sets only")
        return _shot_level_spans(cos, beta, np.asarray(sizes, dtype=int), G)
    if preceding:
        for e in range(N):
            G[e, e] = 0.0
            if e == 0:
                continue
            col = cos[:e, e]
            # suffix sums / maxima give the preceding set s..e-1 for every s
            sums = np.cumsum(col[::-1])[::-1]
            maxs = np.maximum.accumulate(col[::-1])[::-1]
            m = e - np.arange(e)
            f = decay(m, beta) * (sums / m + sigmoid(maxs))
            G[:e, e] = G[:e, e - 1] + f
        return G
    for s in range(N):
        G[s, s] = 0.0
        sums = np.zeros(1)  # per member: sum / max of cos with the others so far
        maxs = np.full(1, -np.inf)
        for e in range(s + 1, N):
            col = cos[s:e, e]
            sums = np.append(sums + col, col.sum())
            maxs = np.append(np.maximum(maxs, col), col.max())
            L = e - s + 1
            G[s, e] = float(decay(L - 1, beta)) * float(np.sum(sums / (L - 1) + sigmoid(maxs)))
    return G


def _shot_level_spans(cos, beta, sizes, G):
    s1 = sigmoid(1.0)
    for e in range(len(cos)):
        n_e = sizes[e]
        q = np.arange(1, n_e)
        G[e, e] = float(np.sum(decay(q, beta) * (1.0 + s1)))
        if e == 0:
            continue
        col = cos[:e, e]
        w = sizes[:e]
        A = np.cumsum(w[::-1])[::-1].astype(float)
        S = np.cumsum((w * col)[::-1])[::-1]
        M = np.maximum.accumulate(col[::-1])[::-1]
        # first shot of super shot e: its preceding set is the earlier super shots only
        h = decay(A, beta) * (S / A + sigmoid(M))
        for k in range(1, n_e):
            h = h + decay(A + k, beta) * ((S + k) / (A + k) + s1)
        G[:e, e] = G[:e, e - 1] + h
    return G


def expand_to_shots(reps, sizes) -> list:
    """Each super-shot representation repeated once per member shot."""
    return [r for r, n in zip(reps, sizes) for _ in range(int(n))]


# ---------------------------------------------------------------- partition search


@dataclass
class GroupingConfig:
    init_count: int | None = 600
    j_range: tuple[int, int] = (50, 400)
    beta: float = math.inf
    k_set: int = 5
    k_para: int = 10
    step_size: float = 0.05
    preceding: bool = True
    level: str = "shot"
    tau: float = 0.5

    def validate(self):
        j_min, j_max = self.j_range
        if not 2 <= j_min <= j_max:
            raise ValueError(f"j_range must satisfy 2 <= j_min <= j_max, got {self.j_range}")
        if self.init_count is not None and j_max >= self.init_count:
            raise ValueError(f"j_max ({j_max}) must be below init_count ({self.init_count})")
        if self.k_set < 1 or self.k_para < 1:
            raise ValueError("k_set and k_para must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.level not in ("shot", "super_shot"):
            raise ValueError(f"level must be 'shot' or 'super_shot', got {self.level!r}")
        if self.level == "shot" and not self.preceding:
            raise ValueError("shot-level scoring requires preceding=True")

    def sizes(self, sset: "SuperShotSet"):
        """Shot counts when scoring at shot level, else None."""
        return [ss.size for ss in sset.items] if self.level == "shot" else None


@dataclass
class ScenePartition:
    """Scenes as inclusive (start, end) ranges of super-shot positions."""

    scenes: list[tuple[int, int]]
    score: float

    @property
    def j(self) -> int:
        return len(self.scenes)

    def cuts(self) -> list[int]:
        """Super-shot positions k such that a scene starts at super shot k."""
        return [s for s, _ in self.scenes[1:]]


class TooFewSuperShotsError(ValueError):
    pass


def _j_bounds(N, cfg, allow_identity):
    j_min, j_max = cfg.j_range
    top = N if allow_identity else N - 1
    if N <= j_min and not (allow_identity and N == j_min):
        raise TooFewSuperShotsError(f"too few super shots: {N} <= j_min={j_min}")
    return j_min, min(j_max, top)


def dp_optimal_partition(sset: SuperShotSet, cfg: GroupingConfig,
                         allow_identity: bool = False) -> ScenePartition:
    """Best contiguous partition over all scene counts j in the configured range.

    Scene counts run up to ``|C| - 1``; ``allow_identity`` also admits
    ``j = |C|`` (every super shot its own scene). Ties pick the smallest
    split point, then the smallest j.
    """
    N = len(sset)
    j_min, j_hi = _j_bounds(N, cfg, allow_identity)
    G = span_scores(sset.cos, cfg.beta, cfg.preceding, cfg.sizes(sset))
    # F[j, m]: best score of the first m super shots in j scenes
    F = np.full((j_hi + 1, N + 1), -np.inf)
    arg = np.zeros((j_hi + 1, N + 1), dtype=int)
    F[1, 1:] = G[0, :]
    k_idx = np.arange(N + 1)[:, None]
    m_idx = np.arange(N + 1)[None, :]
    # Gpad[k, m] = G[k, m-1] for k < m
    Gpad = np.full((N + 1, N + 1), -np.inf)
    Gpad[:N, 1:] = G
    valid = k_idx < m_idx
    for j in range(2, j_hi + 1):
        cand = F[j - 1][:, None] + np.where(valid, Gpad, -np.inf)
        arg[j] = np.argmax(cand, axis=0)
        F[j] = cand[arg[j], np.arange(N + 1)]
    best_j, best = None, -np.inf
    for j in range(j_min, j_hi + 1):
        if F[j, N] > best:
            best_j, best = j, F[j, N]
    scenes = []
    m = N
    for j in range(best_j, 0, -1):
        k = arg[j, m] if j > 1 else 0
        scenes.append((int(k), m - 1))
        m = k
    scenes.reverse()
    return ScenePartition(scenes, float(best))


def _partition_score(reps, scenes, beta, preceding, sizes=None):
    if sizes is None:
        return sum(scene_score(list(reps[s:e + 1]), beta, preceding) for s, e in scenes)
    return sum(scene_score(expand_to_shots(reps[s:e + 1], sizes[s:e + 1]), beta, preceding)
               for s, e in scenes)


def brute_force_oracle(sset: SuperShotSet, cfg: GroupingConfig, allow_identity: bool = False,
                       tie_tol: float = 1e-12) -> ScenePartition:
    """Exhaustive search over contiguous partitions; same contract as the DP.

    Scene scores come straight from :func:`scene_score` (memoised per span),
    not from the DP's incremental tables.
    """
    N = len(sset)
    if N > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_LIMIT} super shots, got {N}")
    j_min, j_hi = _j_bounds(N, cfg, allow_identity)
    sizes = cfg.sizes(sset)
    memo: dict[tuple[int, int], float] = {}

    def span(a, b):
        if (a, b) not in memo:
            memo[(a, b)] = _partition_score(sset.reps, [(a, b)], cfg.beta, cfg.preceding, sizes)
        return memo[(a, b)]

    best = None
    best_key = None
    for j in range(j_min, j_hi + 1):
        for cuts in itertools.combinations(range(1, N), j - 1):
            edges = (0,) + cuts + (N,)
            scenes = [(a, b - 1) for a, b in zip(edges, edges[1:])]
            F = sum(span(a, b) for a, b in scenes)
            # DP tie rule: smallest j, then smallest split point from the last scene backwards
            key = (j, tuple(reversed(cuts)))
            if best is None or F > best.score + tie_tol or (
                    abs(F - best.score) <= tie_tol and key < best_key):
                best, best_key = ScenePartition(scenes, F), key
    return best


# ---------------------------------------------------------------- weight refinement


def _pair_coefficients(sset: SuperShotSet, partition: ScenePartition, cfg: GroupingConfig):
    """dF/dcos(a, b) for every pair of super shots; F_t argmaxes held fixed."""
    N = len(sset)
    Q = np.zeros((N, N))
    cos = sset.cos
    sizes = cfg.sizes(sset)
    for s, e in partition.scenes:
        A = 0
        for l in range(s, e + 1):
            P = list(range(s, l)) if cfg.preceding else [u for u in range(s, e + 1) if u != l]
            if P:
                u_star = P[int(np.argmax(cos[l, P]))]
                sig = sigmoid(cos[l, u_star])
            if sizes is None:
                if P:
                    a = float(decay(len(P), cfg.beta))
                    Q[l, P] += a / len(P)
                    Q[l, u_star] += a * sig * (1 - sig)
                continue
            # shot level: shot q of super shot l sees A earlier-member shots plus q own shots
            if P:
                w = np.asarray(sizes)[P]
                q = np.arange(sizes[l])
                coef = float(np.sum(decay(A + q, cfg.beta) / (A + q)))
                Q[l, P] += coef * w
                # only the first shot's max ranges over other super shots; later shots match themselves
                Q[l, u_star] += float(decay(A, cfg.beta)) * sig * (1 - sig)
            A += sizes[l]
    return Q + Q.T


def objective(sset: SuperShotSet, partition: ScenePartition, cfg: GroupingConfig | None = None) -> float:
    """F(W): summed scene scores of ``partition`` under the current weights."""
    cfg = cfg or GroupingConfig()
    return _partition_score(sset.reps, partition.scenes, cfg.beta, cfg.preceding, cfg.sizes(sset))


def weight_gradients(sset: SuperShotSet, partition: ScenePartition,
                     cfg: GroupingConfig | None = None) -> list[np.ndarray]:
    """Analytic dF/dW_k for every super shot under a fixed partition."""
    cfg = cfg or GroupingConfig()
    Q = _pair_coefficients(sset, partition, cfg)
    np.fill_diagonal(Q, 0.0)
    norms = np.linalg.norm(sset.reps, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = sset.reps / safe[:, None]
    # d cos(a,b) / d C_a = (unit_b - cos_ab * unit_a) / |C_a|
    gC = (Q @ unit - (Q * sset.cos).sum(axis=1)[:, None] * unit) / safe[:, None]
    gC[norms == 0] = 0.0
    out = []
    for k, ss in enumerate(sset.items):
        g = sset.shots[ss.l:ss.r + 1] @ gC[k]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite weight gradient for super shot {k} "
                                     f"(shots {ss.l}..{ss.r})")
        out.append(g)
    return out


def project_simplex_clip(w: np.ndarray) -> np.ndarray:
    w = np.maximum(w, 0.0)
    s = w.sum()
    if s <= 0:
        return np.full(len(w), 1.0 / len(w))
    return w / s


def refine_weights(sset: SuperShotSet, partition: ScenePartition, steps: int = 1,
                   step_size: float = 0.05, cfg: GroupingConfig | None = None) -> SuperShotSet:
    """Gradient ascent on the super-shot weights for a fixed partition.

    After every step each weight vector is clipped at zero and renormalised
    to sum to one. Returns a new set; the input is untouched.
    """
    cfg = cfg or GroupingConfig()
    out = sset.copy()
    for _ in range(steps):
        grads = weight_gradients(out, partition, cfg)
        for ss, g in zip(out.items, grads):
            ss.weights = project_simplex_clip(ss.weights + step_size * g)
        out.refresh()
    return out


def refine_gradient_check(sset: SuperShotSet, partition: ScenePartition,
                          cfg: GroupingConfig | None = None, eps: float = 1e-6,
                          corrupt=None) -> float:
    """Max relative error of :func:`weight_gradients` against central differences.

    The denominator is floored at 1e-5 so that entries whose true gradient is
    exactly zero (pairs inside one super shot) are not judged on round-off.
    """
    cfg = cfg or GroupingConfig()
    grads = weight_gradients(sset, partition, cfg)
    if corrupt is not None:
        grads = corrupt(grads)
    worst = 0.0
    for k, ss in enumerate(sset.items):
        for j in range(ss.size):
            vals = []
            for sign in (1, -1):
                probe = sset.copy()
                probe.items[k].weights[j] += sign * eps
                probe.refresh()
                vals.append(objective(probe, partition, cfg))
            g_fd = (vals[0] - vals[1]) / (2 * eps)
            g_a = grads[k][j]
            worst = max(worst, abs(g_a - g_fd) / max(1e-5, abs(g_a) + abs(g_fd)))
    return worst


# ---------------------------------------------------------------- Algorithm driver


@dataclass
class GroupingTrace:
    rows: list[tuple[int, int, int, float]] = field(default_factory=list)
    sets: list[SuperShotSet] = field(default_factory=list)
    converged: bool = False
    outer_iterations: int = 0

    def to_csv(self) -> str:
        lines = ["iteration,n_super_shots,j_star,F_star"]
        lines += [f"{it},{n},{j},{F:.10g}" for it, n, j, F in self.rows]
        return "\n".join(lines) + "\n"


def merge_by_partition(sset: SuperShotSet, partition: ScenePartition) -> SuperShotSet:
    bounds = [sset.items[s].l for s, _ in partition.scenes[1:]]
    return SuperShotSet.from_cuts(sset.shots, bounds)


def optimal_grouping(m, p, cfg: GroupingConfig, trace: GroupingTrace | None = None) -> np.ndarray:
    """Final 0/1 decisions over boundaries 1..n-1.

    ``m`` is a manifest or an (n, D) grouping-feature array. With
    ``cfg.init_count=None`` the initial super shots come from the cuts with
    ``p > cfg.tau``.

    Each outer round runs ``k_para`` rounds of (partition search, weight
    refinement), merges the super shots of every scene, and stops once a
    round leaves the scene boundaries unchanged. The search may keep every
    super shot as its own scene, so a set that is already optimal is a fixed
    point.
    """
    cfg.validate()
    X = grouping_features(m) if isinstance(m, MovieManifest) else np.asarray(m, dtype=float)
    p = np.asarray(p, dtype=float)
    if cfg.init_count is None:
        count = int(np.sum(p > cfg.tau)) + 1
    else:
        count = cfg.init_count
    sset = initial_super_shots(X, p, count)
    if trace is not None:
        trace.sets.append(sset.copy())
    for it in range(cfg.k_set):
        if len(sset) < cfg.j_range[0]:
            if trace is not None:
                trace.converged = True
            break
        part = None
        for _ in range(cfg.k_para):
            part = dp_optimal_partition(sset, cfg, allow_identity=True)
            sset = refine_weights(sset, part, 1, cfg.step_size, cfg)
        if trace is not None:
            trace.rows.append((it, len(sset), part.j, part.score))
            trace.outer_iterations = it + 1
        unchanged = part.j == len(sset)
        if not unchanged:
            sset = merge_by_partition(sset, part)
        if trace is not None:
            trace.sets.append(sset.copy())
        if unchanged:
            if trace is not None:
                trace.converged = True
            break
    bits = np.zeros(len(X) - 1, dtype=np.int8)
    for b in sset.boundaries():
        bits[b - 1] = 1
    return bits


def dump_correlation(sset: SuperShotSet, path) -> None:
    """Write the super-shot cosine matrix as CSV (row/column = super-shot index)."""
    rows = [",".join([""] + [str(k) for k in range(len(sset))])]
    for k, row in enumerate(sset.cos):
        rows.append(",".join([str(k)] + [repr(float(v)) for v in row]))
    atomic_write_text(Path(path), "\n".join(rows) + "\n")


def read_correlation(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])
