import copy
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lgss.data import (
    ManifestFormatError,
    ManifestValidationError,
    MovieManifest,
    ShotRecord,
    SyntheticConfig,
    bits_to_scene_ids,
    dumps_manifest,
    generate_corpus,
    generate_synthetic_movie,
    load_corpus,
    load_manifest,
    loads_manifest,
    save_manifest,
    validate_manifest,
)


def two_shot_movie():
    f = lambda *v: {"place": np.array(v, dtype=np.float32)}
    shots = [ShotRecord(0, 0.0, 1.5, f(1, 0, 0, 0)), ShotRecord(1, 1.5, 4.0, f(0, 1, 0, 0))]
    return MovieManifest("tiny", {"place": 4}, shots, {1})


def small_synth(**kw):
    base = dict(n_scenes_range=(3, 4), shots_per_scene_range=(3, 6),
                modality_dims={"place": 4, "audio": 3}, seed=3)
    base.update(kw)
    return SyntheticConfig(**base)


def test_minimal_two_shot_file(tmp_path):
    path = tmp_path / "tiny.json"
    save_manifest(two_shot_movie(), path)
    m = load_manifest(path)
    assert m.n_shots == 2
    assert m.gt_boundaries == {1}
    assert list(m.gt_vector()) == [1]


def test_non_positive_duration_is_rejected(tmp_path):
    m = two_shot_movie()
    m.shots[1].end_s = 1.0
    path = tmp_path / "bad.json"
    path.write_text(dumps_manifest(m))
    with pytest.raises(ManifestValidationError, match="non-positive duration"):
        load_manifest(path)


def test_round_trip_50_shots_is_bit_exact(tmp_path):
    cfg = small_synth(n_scenes_range=(5, 5), shots_per_scene_range=(10, 10))
    m = generate_synthetic_movie(cfg)
    assert m.n_shots == 50
    save_manifest(m, tmp_path / "m.json")
    back = load_manifest(tmp_path / "m.json")
    assert back == m
    for a, b in zip(m.shots, back.shots):
        for mod in m.modality_dims:
            assert a.features[mod].tobytes() == b.features[mod].tobytes()


def test_two_saves_are_byte_identical(tmp_path):
    m = generate_synthetic_movie(small_synth())
    save_manifest(m, tmp_path / "a.json")
    save_manifest(m, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_save_to_unwritable_path_raises(tmp_path):
    with pytest.raises(OSError):
        save_manifest(two_shot_movie(), tmp_path / "missing_dir" / "m.json")


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_save_to_read_only_dir_raises(tmp_path):
    d = tmp_path / "ro"
    d.mkdir()
    d.chmod(0o500)
    with pytest.raises(OSError):
        save_manifest(two_shot_movie(), d / "m.json")


def test_parse_error_reports_line(tmp_path):
    text = dumps_manifest(two_shot_movie()).splitlines()
    text[2] = text[2][:10]
    path = tmp_path / "broken.json"
    path.write_text("\n".join(text))
    with pytest.raises(ManifestFormatError, match=r"broken.json:\d+:\d+"):
        load_manifest(path)


def test_missing_field_is_named():
    doc = dumps_manifest(two_shot_movie()).replace('"start_s"', '"begin"', 1)
    with pytest.raises(ManifestFormatError, match="start_s"):
        loads_manifest(doc)


def test_validate_valid_manifest_is_empty():
    assert validate_manifest(generate_synthetic_movie(small_synth())) == []


def test_nan_feature_gives_one_violation():
    m = generate_synthetic_movie(small_synth())
    m.shots[4].features["audio"] = m.shots[4].features["audio"].copy()
    m.shots[4].features["audio"][1] = np.nan
    v = validate_manifest(m)
    assert len(v) == 1
    assert v[0].shot == 4 and v[0].rule == "non-finite feature" and "audio" in v[0].detail


def test_boundary_index_n_is_out_of_range():
    m = generate_synthetic_movie(small_synth())
    m.gt_boundaries = set(m.gt_boundaries) | {m.n_shots}
    v = validate_manifest(m)
    assert [x.rule for x in v] == ["boundary index out of range"]


def test_synthetic_is_deterministic_in_seed():
    a = generate_synthetic_movie(small_synth(seed=7))
    b = generate_synthetic_movie(small_synth(seed=7))
    c = generate_synthetic_movie(small_synth(seed=8))
    assert a == b and a.gt_boundaries == b.gt_boundaries
    assert a != c


def test_zero_noise_gives_identical_unit_vectors_within_scene():
    m = generate_synthetic_movie(small_synth(noise_sigma=0.0))
    scene = m.scene_ids()
    for mod in m.modality_dims:
        X = m.feature_matrix(mod)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-6)
        for k in np.unique(scene):
            block = X[scene == k]
            assert np.all(block == block[0])


def test_fixed_ranges_give_exact_counts():
    m = generate_synthetic_movie(small_synth(n_scenes_range=(5, 5), shots_per_scene_range=(4, 4)))
    assert m.n_shots == 20
    assert m.gt_boundaries == {4, 8, 12, 16}


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), share=st.floats(0, 1), sigma=st.floats(0, 1))
def test_generated_movies_satisfy_invariants(seed, share, sigma):
    cfg = small_synth(seed=seed, anchor_share_prob=share, noise_sigma=sigma)
    m = generate_synthetic_movie(cfg)
    assert validate_manifest(m) == []
    assert len(m.gt_boundaries) == len(np.unique(m.scene_ids())) - 1
    for a, b in zip(m.shots, m.shots[1:]):
        assert abs(b.start_s - a.end_s) <= 1e-6


def test_scene_id_helper():
    assert list(bits_to_scene_ids([0, 1, 0, 1])) == [0, 0, 1, 1, 2]


MUTATIONS = {
    "non-positive duration": lambda m: setattr(m.shots[2], "end_s", m.shots[2].start_s),
    "shots not contiguous": lambda m: setattr(m.shots[3], "start_s", m.shots[3].start_s + 0.5),
    "feature dimension mismatch": lambda m: m.shots[1].features.__setitem__(
        "place", np.zeros(7, dtype=np.float32)),
    "non-finite feature": lambda m: m.shots[0].features.__setitem__(
        "place", np.full(4, np.inf, dtype=np.float32)),
    "boundary index out of range": lambda m: m.gt_boundaries.add(0),
    "shot index out of order": lambda m: setattr(m.shots[5], "index", 9),
    "modality set mismatch": lambda m: m.shots[2].features.pop("audio"),
}


@pytest.mark.parametrize("rule", sorted(MUTATIONS))
def test_each_mutation_is_caught_by_name(rule):
    m = generate_synthetic_movie(small_synth())
    m = copy.deepcopy(m)
    MUTATIONS[rule](m)
    assert rule in {v.rule for v in validate_manifest(m)}


def test_corpus_helpers(tmp_path):
    corpus = generate_corpus(small_synth(), 3, prefix="x")
    assert [m.movie_id for m in corpus] == ["x_0000", "x_0001", "x_0002"]
    for m in corpus:
        save_manifest(m, tmp_path / f"{m.movie_id}.json")
    (tmp_path / "config.json").write_text("{}")
    assert load_corpus(tmp_path) == corpus


def test_boundary_times_are_shot_ends():
    m = two_shot_movie()
    assert list(m.boundary_times()) == [1.5]
    assert math.isclose(m.shots[0].end_s, 1.5)
