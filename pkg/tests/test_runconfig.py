"""Run-configuration parsing and resolution."""
import pytest

from fedua.errors import ConfigurationError
from fedua.network import compact_architecture
from fedua.runconfig import (FeatureData, SyntheticData, build_population,
                             parse_run_config, resolve_embedding_length,
                             resolve_model)


def minimal(**overrides):
    doc = {
        "federated": {"rounds": 3},
        "embedding": {"length": 16},
        "data": {"source": "synthetic", "participants": 4},
    }
    doc.update(overrides)
    return doc


def test_defaults_follow_reference_training_setup():
    cfg = parse_run_config(minimal())
    assert cfg.client_fraction == 5e-3
    assert cfg.local_epochs == 1
    assert cfg.learning_rate == 2e-3
    assert cfg.seed == 0
    assert cfg.tpr_targets == (0.8, 0.9)
    assert isinstance(cfg.data, SyntheticData)
    assert cfg.data.train_samples == 15 and cfg.data.validation_samples == 5


def test_embedding_requires_exactly_one_mode():
    with pytest.raises(ConfigurationError, match="exactly one"):
        parse_run_config(minimal(embedding={"length": 8, "min_distance": 2}))
    with pytest.raises(ConfigurationError, match="exactly one"):
        parse_run_config(minimal(embedding={}))
    cfg = parse_run_config(minimal(embedding={"min_distance": 3}))
    assert cfg.min_distance == 3 and cfg.confidence == 0.9  # default confidence
    with pytest.raises(ConfigurationError):
        parse_run_config(minimal(embedding={"length": 8, "confidence": 0.9}))


def test_unknown_keys_rejected():
    with pytest.raises(ConfigurationError, match="unknown keys"):
        parse_run_config(minimal(bogus=1))
    with pytest.raises(ConfigurationError, match="unknown keys"):
        parse_run_config(minimal(federated={"rounds": 1, "momentum": 0.9}))


def test_missing_required_fields():
    with pytest.raises(ConfigurationError):
        parse_run_config({"embedding": {"length": 4},
                          "data": {"source": "synthetic", "participants": 2}})
    with pytest.raises(ConfigurationError):
        parse_run_config(minimal(federated={}))
    with pytest.raises(ConfigurationError):
        parse_run_config(minimal(data={"source": "synthetic"}))


def test_feature_path_checked_at_parse_time(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        parse_run_config(minimal(data={"source": "features",
                                       "path": str(tmp_path / "missing.csv")}))


def test_bad_ranges_rejected():
    with pytest.raises(ConfigurationError):
        parse_run_config(minimal(federated={"rounds": 1, "client_fraction": 0.0}))
    with pytest.raises(ConfigurationError):
        parse_run_config(minimal(embedding={"min_distance": 2, "confidence": 1.0}))
    with pytest.raises(ConfigurationError):
        parse_run_config(minimal(evaluation={"tpr_targets": [0.0]}))
    with pytest.raises(ConfigurationError):
        parse_run_config(minimal(model={"preset": "enormous"}))


def test_sized_embedding_resolution():
    cfg = parse_run_config(minimal(embedding={"min_distance": 2,
                                              "confidence": 0.9}))
    assert resolve_embedding_length(cfg, 4) == 10
    explicit = parse_run_config(minimal())
    assert resolve_embedding_length(explicit, 4) == 16


def test_model_resolution_and_mismatches():
    cfg = parse_run_config(minimal())
    model = resolve_model(cfg, input_length=256, embedding_length=16)
    assert model == compact_architecture(256, 16)

    explicit = parse_run_config(minimal(model={
        "input_length": 32, "embedding_length": 16,
        "layers": [{"kind": "fully_connected", "n_in": 32, "n_out": 16},
                   {"kind": "sigmoid"}]}))
    assert resolve_model(explicit, 32, 16).input_length == 32
    with pytest.raises(ConfigurationError):
        resolve_model(explicit, 64, 16)
    with pytest.raises(ConfigurationError):
        resolve_model(explicit, 32, 8)


def test_build_population_synthetic_and_features(tmp_path):
    cfg = parse_run_config(minimal(seed=9))
    pop = build_population(cfg)
    assert len(pop.participants) == 4
    from fedua.datagen import save_features
    path = tmp_path / "pop.csv"
    save_features(pop, path)
    cfg2 = parse_run_config(minimal(data={"source": "features", "path": str(path)}))
    pop2 = build_population(cfg2)
    assert isinstance(cfg2.data, FeatureData)
    assert pop2.participants[0].train.tobytes() == pop.participants[0].train.tobytes()
