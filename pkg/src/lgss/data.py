"""Movie manifests: shots, per-modality features, scene-boundary labels.

A manifest is one JSON document per movie::

    {"format": "lgss-manifest", "version": 1,
     "movie_id": "...", "modality_dims": {"place": 16, ...},
     "shots": [{"index": 0, "start_s": 0.0, "end_s": 2.5,
                "features": {"place": [...], ...}}, ...],
     "gt": {"boundaries": [3, 9], "label_confidence": {"3": "high"}}}

Boundary ``i`` (1-based, ``1 <= i <= n-1``) sits between shot ``i-1`` and
shot ``i`` in 0-based shot indices, i.e. it follows the ``i``-th shot.
Feature values are stored as float32 and written with ``repr`` of the exact
float, so a load/save round trip is bit-identical.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODALITIES = ("place", "cast", "action", "audio")
FORMAT_TAG = "lgss-manifest"
FORMAT_VERSION = 1
CONTIGUITY_TOL = 1e-6


class ManifestFormatError(ValueError):
    """The file does not parse as a manifest."""


class ManifestValidationError(ValueError):
    """A parsed manifest breaks a structural rule."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    rule: str
    shot: int | None = None
    detail: str = ""

    def __str__(self):
        where = f"shot {self.shot}: " if self.shot is not None else ""
        tail = f" ({self.detail})" if self.detail else ""
        return f"{where}{self.rule}{tail}"


@dataclass
class ShotRecord:
    index: int
    start_s: float
    end_s: float
    features: dict[str, np.ndarray]

    def __eq__(self, other):
        if not isinstance(other, ShotRecord):
            return NotImplemented
        return (
            self.index == other.index
            and self.start_s == other.start_s
            and self.end_s == other.end_s
            and self.features.keys() == other.features.keys()
            and all(np.array_equal(self.features[k], other.features[k]) for k in self.features)
        )


@dataclass
class MovieManifest:
    movie_id: str
    modality_dims: dict[str, int]
    shots: list[ShotRecord]
    gt_boundaries: set[int] | None = None
    gt_label_confidence: dict[int, str] | None = None

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    @property
    def modalities(self) -> list[str]:
        return list(self.modality_dims)

    def feature_matrix(self, modality: str) -> np.ndarray:
        """(n, d) array of one modality's shot features."""
        return np.stack([s.features[modality] for s in self.shots])

    def boundary_times(self) -> np.ndarray:
        """Timestamp of every boundary 1..n-1: the end of the shot it follows."""
        return np.array([s.end_s for s in self.shots[:-1]], dtype=float)

    def gt_vector(self) -> np.ndarray:
        """Ground truth as a 0/1 vector over boundaries 1..n-1."""
        if self.gt_boundaries is None:
            raise ValueError(f"movie {self.movie_id!r} has no ground-truth boundaries")
        return boundaries_to_bits(self.gt_boundaries, self.n_shots)

    def scene_ids(self) -> np.ndarray:
        """Per-shot scene id derived from the ground-truth boundaries."""
        return bits_to_scene_ids(self.gt_vector())


def boundaries_to_bits(boundaries, n_shots: int) -> np.ndarray:
    bits = np.zeros(n_shots - 1, dtype=np.int8)
    for b in boundaries:
        bits[b - 1] = 1
    return bits


def bits_to_boundaries(bits) -> list[int]:
    return [int(i) + 1 for i in np.flatnonzero(np.asarray(bits))]


def bits_to_scene_ids(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=int)
    return np.concatenate([[0], np.cumsum(bits)])


# ---------------------------------------------------------------- validation


def validate_manifest(m: MovieManifest) -> list[Violation]:
    out: list[Violation] = []
    n = len(m.shots)
    if n < 2:
        out.append(Violation("too few shots", detail=f"n={n}, need >= 2"))
    for mod, dim in m.modality_dims.items():
        if not isinstance(dim, (int, np.integer)) or dim < 1:
            out.append(Violation("bad modality dimension", detail=f"{mod}={dim!r}"))
    prev = None
    for pos, shot in enumerate(m.shots):
        if shot.index != pos:
            out.append(Violation("shot index out of order", pos, f"index={shot.index}"))
        if not (math.isfinite(shot.start_s) and math.isfinite(shot.end_s)):
            out.append(Violation("non-finite timestamp", pos))
        elif shot.end_s <= shot.start_s:
            out.append(Violation("non-positive duration", pos))
        if prev is not None and abs(shot.start_s - prev.end_s) > CONTIGUITY_TOL:
            out.append(Violation("shots not contiguous", pos,
                                 f"starts {shot.start_s} but previous ends {prev.end_s}"))
        prev = shot
        if set(shot.features) != set(m.modality_dims):
            out.append(Violation("modality set mismatch", pos,
                                 f"{sorted(shot.features)} vs {sorted(m.modality_dims)}"))
        for mod, vec in shot.features.items():
            dim = m.modality_dims.get(mod)
            arr = np.asarray(vec)
            if arr.ndim != 1 or (dim is not None and arr.shape[0] != dim):
                out.append(Violation("feature dimension mismatch", pos,
                                     f"{mod}: {arr.shape} vs {dim}"))
            elif not np.all(np.isfinite(arr)):
                out.append(Violation("non-finite feature", pos, mod))
    if m.gt_boundaries is not None:
        for b in sorted(m.gt_boundaries):
            if not (1 <= b <= n - 1):
                out.append(Violation("boundary index out of range", detail=f"{b} not in [1, {n - 1}]"))
    if m.gt_label_confidence is not None:
        for b, tag in m.gt_label_confidence.items():
            if tag not in ("high", "low"):
                out.append(Violation("bad label confidence", detail=f"boundary {b}: {tag!r}"))
            if not (1 <= b <= n - 1):
                out.append(Violation("boundary index out of range", detail=f"confidence tag at {b}"))
    return out


# ---------------------------------------------------------------- file I/O


def _manifest_to_dict(m: MovieManifest) -> dict:
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "movie_id": m.movie_id,
        "modality_dims": {k: int(v) for k, v in m.modality_dims.items()},
        "shots": [
            {
                "index": s.index,
                "start_s": float(s.start_s),
                "end_s": float(s.end_s),
                "features": {
                    mod: [float(x) for x in np.asarray(s.features[mod], dtype=np.float32)]
                    for mod in m.modality_dims
                },
            }
            for s in m.shots
        ],
    }
    if m.gt_boundaries is not None:
        gt: dict = {"boundaries": sorted(int(b) for b in m.gt_boundaries)}
        if m.gt_label_confidence is not None:
            gt["label_confidence"] = {str(k): v for k, v in sorted(m.gt_label_confidence.items())}
        doc["gt"] = gt
    return doc


def dumps_manifest(m: MovieManifest) -> str:
    # one shot per line keeps files diffable and parse errors line-addressable
    doc = _manifest_to_dict(m)
    shots = doc.pop("shots")
    gt = doc.pop("gt", None)
    head = json.dumps(doc)[:-1]
    lines = [head + ', "shots": [']
    for k, s in enumerate(shots):
        lines.append(json.dumps(s) + ("," if k < len(shots) - 1 else ""))
    lines.append("]" + (', "gt": ' + json.dumps(gt) if gt is not None else "") + "}")
    return "\n".join(lines) + "\n"


def save_manifest(m: MovieManifest, path) -> None:
    atomic_write_text(path, dumps_manifest(m))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require(obj, key, where, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ManifestFormatError(f"{where}: missing field {key!r}")
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise ManifestFormatError(f"{where}: field {key!r} has type {type(val).__name__}")
    return val


def loads_manifest(text: str, source: str = "<string>") -> MovieManifest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestFormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise ManifestFormatError(f"{source}: not an {FORMAT_TAG} document")
    if doc.get("version") != FORMAT_VERSION:
        raise ManifestFormatError(f"{source}: unsupported version {doc.get('version')!r}")
    movie_id = _require(doc, "movie_id", source, str)
    dims = _require(doc, "modality_dims", source, dict)
    raw_shots = _require(doc, "shots", source, list)
    shots = []
    for k, rs in enumerate(raw_shots):
        where = f"{source}: shots[{k}]"
        feats_raw = _require(rs, "features", where, dict)
        feats = {}
        for mod, vals in feats_raw.items():
            if not isinstance(vals, list):
                raise ManifestFormatError(f"{where}: features.{mod} is not an array")
            try:
                feats[mod] = np.asarray(vals, dtype=np.float32)
            except (TypeError, ValueError) as exc:
                raise ManifestFormatError(f"{where}: features.{mod}: {exc}") from exc
        shots.append(ShotRecord(
            index=int(_require(rs, "index", where, int)),
            start_s=float(_require(rs, "start_s", where, (int, float))),
            end_s=float(_require(rs, "end_s", where, (int, float))),
            features=feats,
        ))
    gt_b = gt_conf = None
    if "gt" in doc and doc["gt"] is not None:
        gt = doc["gt"]
        gt_b = {int(b) for b in _require(gt, "boundaries", f"{source}: gt", list)}
        if "label_confidence" in gt:
            gt_conf = {int(k): v for k, v in gt["label_confidence"].items()}
    m = MovieManifest(movie_id, {k: int(v) for k, v in dims.items()}, shots, gt_b, gt_conf)
    violations = validate_manifest(m)
    if violations:
        raise ManifestValidationError(violations)
    return m


def load_manifest(path) -> MovieManifest:
    path = Path(path)
    return loads_manifest(path.read_text(), source=str(path))


RESERVED_NAMES = {"config.json"}


def manifest_paths(directory) -> list[Path]:
    """Manifest files of a corpus directory, sorted by name (run configs skipped)."""
    return [p for p in sorted(Path(directory).glob("*.json")) if p.name not in RESERVED_NAMES]


def load_corpus(directory) -> list[MovieManifest]:
    return [load_manifest(p) for p in manifest_paths(directory)]


# ---------------------------------------------------------------- synthetic movies


@dataclass
class SyntheticConfig:
    n_scenes_range: tuple[int, int] = (5, 15)
    shots_per_scene_range: tuple[int, int] = (4, 20)
    modality_dims: dict[str, int] = field(default_factory=lambda: {m: 16 for m in MODALITIES})
    noise_sigma: dict[str, float] | float = 0.3
    anchor_share_prob: float = 0.3
    shot_duration_range_s: tuple[float, float] = (1.0, 6.0)
    seed: int = 0

    def sigma(self, modality: str) -> float:
        if isinstance(self.noise_sigma, dict):
            return float(self.noise_sigma[modality])
        return float(self.noise_sigma)

    def validate(self) -> None:
        for name in ("n_scenes_range", "shots_per_scene_range", "shot_duration_range_s"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range [{lo}, {hi}]")
        if self.n_scenes_range[0] < 1 or self.shots_per_scene_range[0] < 1:
            raise ValueError("scene and shot counts must be >= 1")
        if self.n_scenes_range[1] * self.shots_per_scene_range[1] < 2:
            raise ValueError("configuration can only produce movies with fewer than 2 shots")
        if self.shot_duration_range_s[0] <= 0:
            raise ValueError("shot durations must be positive")
        if not 0.0 <= self.anchor_share_prob <= 1.0:
            raise ValueError("anchor_share_prob must lie in [0, 1]")
        for mod in self.modality_dims:
            if self.sigma(mod) < 0:
                raise ValueError(f"noise_sigma[{mod}] must be >= 0")
            if self.modality_dims[mod] < 1:
                raise ValueError(f"modality_dims[{mod}] must be >= 1")


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def generate_synthetic_movie(cfg: SyntheticConfig, movie_id: str | None = None) -> MovieManifest:
    """Draw a movie whose scenes are clusters around per-modality anchors.

    Anchors are carried over from the previous scene with probability
    ``anchor_share_prob`` per modality, so adjacent scenes can agree on some
    modalities and differ only on the others.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    mods = list(cfg.modality_dims)
    while True:
        n_scenes = int(rng.integers(cfg.n_scenes_range[0], cfg.n_scenes_range[1] + 1))
        sizes = rng.integers(cfg.shots_per_scene_range[0], cfg.shots_per_scene_range[1] + 1,
                             size=n_scenes)
        if sizes.sum() >= 2:
            break
    shots: list[ShotRecord] = []
    boundaries: set[int] = set()
    anchors: dict[str, np.ndarray] = {}
    t = 0.0
    lo_d, hi_d = cfg.shot_duration_range_s
    for k, size in enumerate(sizes):
        for mod in mods:
            if k > 0 and rng.random() < cfg.anchor_share_prob:
                continue
            anchors[mod] = _unit(rng.standard_normal(cfg.modality_dims[mod]))
        if k > 0:
            boundaries.add(len(shots))
        for _ in range(int(size)):
            feats = {}
            for mod in mods:
                noise = rng.standard_normal(cfg.modality_dims[mod])
                feats[mod] = _unit(anchors[mod] + cfg.sigma(mod) * noise).astype(np.float32)
            dur = float(rng.uniform(lo_d, hi_d))
            # round to microseconds so contiguity survives text round trips exactly
            end = round(t + dur, 6)
            shots.append(ShotRecord(len(shots), t, end, feats))
            t = end
    mid = movie_id if movie_id is not None else f"synth_{cfg.seed:06d}"
    return MovieManifest(mid, dict(cfg.modality_dims), shots, boundaries)


def generate_corpus(cfg: SyntheticConfig, count: int, prefix: str = "movie") -> list[MovieManifest]:
    """``count`` movies with seeds derived from ``cfg.seed``."""
    seeds = np.random.SeedSequence(cfg.seed).generate_state(count)
    out = []
    for k, s in enumerate(seeds):
        c = SyntheticConfig(**{**cfg.__dict__, "seed": int(s)})
        out.append(generate_synthetic_movie(c, movie_id=f"{prefix}_{k:04d}"))
    return out
