"""Synthetic population generation and feature-file round trips."""
import numpy as np
import pytest

from fedua.datagen import (ClientDataset, Population, load_features,
                           paper_shaped_split, save_features, synth_population,
                           write_manifest)
from fedua.errors import ParseError

from oracles import nearest_centroid_accuracy


def small_population(**overrides):
    kwargs = dict(n_participants=4, n_unseen=2, input_length=32,
                  separation=6.0, noise=0.5, seed=1,
                  n_train=6, n_validation=3, n_warmup=4, n_test=2,
                  n_unseen_test=5)
    kwargs.update(overrides)
    return synth_population(**kwargs)


def test_population_shapes():
    pop = small_population()
    assert len(pop.participants) == 4 and len(pop.unseen) == 2
    client = pop.participants[0]
    assert client.train.shape == (6, 1, 32)
    assert client.validation.shape == (3, 1, 32)
    assert client.warmup.shape == (4, 1, 32)
    assert client.test.shape == (2, 1, 32)
    stranger = pop.unseen[0]
    assert stranger.test.shape == (5, 1, 32)
    assert stranger.train.shape == (0, 1, 32)
    assert set(pop.participant_ids()) == {0, 1, 2, 3}
    assert {c.user_id for c in pop.unseen} == {4, 5}


def test_population_is_deterministic():
    a, b = small_population(), small_population()
    for ca, cb in zip(a.participants + a.unseen, b.participants + b.unseen):
        for split in ("train", "validation", "warmup", "test"):
            assert ca.split(split).tobytes() == cb.split(split).tobytes()
    c = small_population(seed=2)
    assert a.participants[0].train.tobytes() != c.participants[0].train.tobytes()


def test_zero_noise_samples_equal_signature():
    pop = small_population(noise=0.0)
    client = pop.participants[1]
    stacked = np.concatenate([client.train, client.validation,
                              client.warmup, client.test])
    assert np.allclose(stacked, stacked[0])


def test_splits_are_distinct_draws():
    pop = small_population()
    client = pop.participants[2]
    rows = np.concatenate([client.train, client.validation,
                           client.warmup, client.test])[:, 0, :]
    # with fresh noise per split, no two samples are identical
    for i in range(rows.shape[0]):
        for j in range(i + 1, rows.shape[0]):
            assert not np.array_equal(rows[i], rows[j])


def test_separation_dominates_noise_nearest_centroid():
    pop = small_population(separation=10.0, noise=0.3)
    assert nearest_centroid_accuracy(pop) == 1.0


def test_signature_distance_scales_with_separation():
    small = small_population(separation=1.0, noise=1e-9)
    large = small_population(separation=5.0, noise=1e-9)

    def mean_pair_dist(pop):
        sigs = [c.train[0, 0] for c in pop.participants]
        ds = [float(((a - b) ** 2).sum())
              for i, a in enumerate(sigs) for b in sigs[i + 1:]]
        return float(np.mean(ds))

    assert mean_pair_dist(large) / mean_pair_dist(small) == pytest.approx(25.0, rel=1e-6)


def test_argument_validation():
    with pytest.raises(ValueError):
        small_population(separation=0.0)
    with pytest.raises(ValueError):
        small_population(noise=-1.0)
    with pytest.raises(ValueError):
        small_population(input_length=3)
    with pytest.raises(ValueError):
        small_population(n_train=0)


# the fixed split layout


def test_paper_shaped_split_participant():
    samples = np.arange(20 * 8, dtype=float).reshape(20, 1, 8)
    ds = paper_shaped_split(samples, user_id=3)
    assert ds.train.shape == (15, 1, 8)
    assert ds.validation.shape == (5, 1, 8)
    assert np.array_equal(ds.warmup, ds.validation)  # aliases by default
    assert ds.test.shape == (0, 1, 8)
    assert np.array_equal(ds.train[0, 0], samples[0, 0])


def test_paper_shaped_split_rejects_short_input():
    with pytest.raises(ValueError):
        paper_shaped_split(np.zeros((19, 1, 4)), user_id=0)


def test_paper_shaped_split_unseen():
    samples = np.random.default_rng(0).standard_normal((12, 1, 4))
    ds = paper_shaped_split(samples, user_id=9, unseen=True)
    assert ds.test.shape == (10, 1, 4)
    assert ds.train.shape == (0, 1, 4)
    with pytest.raises(ValueError):
        paper_shaped_split(samples[:9], user_id=9, unseen=True)


def test_paper_shaped_split_disjoint_warmup():
    samples = np.random.default_rng(1).standard_normal((26, 1, 4))
    ds = paper_shaped_split(samples, user_id=1, warmup_count=4)
    assert ds.warmup.shape == (4, 1, 4)
    assert ds.test.shape == (2, 1, 4)
    assert not np.array_equal(ds.warmup[0], ds.validation[0])
    with pytest.raises(ValueError):
        paper_shaped_split(samples[:22], user_id=1, warmup_count=4)


# feature CSV


def test_feature_roundtrip_is_lossless(tmp_path):
    pop = small_population()
    path = tmp_path / "pop.csv"
    save_features(pop, path)
    loaded = load_features(path)
    assert loaded.seed == pop.seed
    assert loaded.separation == pop.separation
    assert loaded.noise == pop.noise
    assert len(loaded.participants) == 4 and len(loaded.unseen) == 2
    for orig, back in zip(pop.participants, loaded.participants):
        assert orig.user_id == back.user_id
        for split in ("train", "validation", "warmup", "test"):
            assert orig.split(split).tobytes() == back.split(split).tobytes()
    for orig, back in zip(pop.unseen, loaded.unseen):
        assert orig.test.tobytes() == back.test.tobytes()


def test_empty_feature_file_is_parse_error(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("")
    with pytest.raises(ParseError):
        load_features(path)
    path.write_text("user_id,split,sample_index,f0\n")
    with pytest.raises(ParseError, match="no samples"):
        load_features(path)


def test_inconsistent_width_reports_line_number(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("user_id,split,sample_index,f0,f1\n"
                    "0,train,0,1.0,2.0\n"
                    "0,train,1,1.0\n")
    with pytest.raises(ParseError, match="line 3"):
        load_features(path)


def test_unknown_split_label_rejected(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("user_id,split,sample_index,f0\n0,bogus,0,1.0\n")
    with pytest.raises(ParseError, match="bogus"):
        load_features(path)


def test_duplicate_sample_rejected(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("user_id,split,sample_index,f0\n"
                    "0,train,0,1.0\n0,train,0,2.0\n")
    with pytest.raises(ParseError, match="duplicate"):
        load_features(path)


def test_unseen_cannot_mix_with_participant_splits(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text("user_id,split,sample_index,f0\n"
                    "0,train,0,1.0\n0,unseen,0,2.0\n")
    with pytest.raises(ParseError, match="mixes"):
        load_features(path)


def test_population_id_overlap_rejected():
    mk = lambda uid: ClientDataset(user_id=uid, train=np.zeros((1, 1, 4)),
                                   warmup=np.zeros((0, 1, 4)),
                                   validation=np.zeros((0, 1, 4)),
                                   test=np.zeros((0, 1, 4)))
    with pytest.raises(ValueError):
        Population(participants=[mk(1)], unseen=[mk(1)])


def test_manifest_contents(tmp_path):
    pop = small_population()
    path = tmp_path / "manifest.json"
    write_manifest(pop, path)
    import json
    doc = json.loads(path.read_text())
    assert doc["input_length"] == 32
    assert doc["participants"][0]["splits"] == {"train": 6, "validation": 3,
                                                "warmup": 4, "test": 2}
    assert doc["unseen"][0]["test_samples"] == 5
