"""Run configuration: one JSON document drives the whole pipeline.

Schema (defaults in parentheses)::

    {
      "seed": 0,
      "output_dir": "runs/demo",            # optional, CLI --out overrides
      "federated": {
        "rounds": 300,                      # required
        "client_fraction": 0.005,           # (5e-3)
        "local_epochs": 1,                  # (1)
        "batch_size": 8,                    # (8)
        "learning_rate": 0.002              # (2e-3)
      },
      "embedding": {"length": 64},          # or {"min_distance": 30,
                                            #     "confidence": 0.9}
      "model": {"preset": "compact"},       # or {"input_length": ...,
                                            #     "embedding_length": ...,
                                            #     "layers": [...]}
      "data": {
        "source": "synthetic",              # or "features"
        "participants": 30, "unseen": 20,   # synthetic only
        "input_length": 256, "separation": 6.0, "noise": 0.5,
        "train_samples": 15, "validation_samples": 5,
        "warmup_samples": 5, "test_samples": 5, "unseen_test_samples": 10,
        "path": "features.csv"              # features only
      },
      "evaluation": {"tpr_targets": [0.8, 0.9], "log_x": false}
    }

Exactly one of ``embedding.length`` and ``embedding.min_distance`` must be
given; with ``min_distance`` the embedding length is sized from the
minimum-distance bound at the requested confidence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .codebook import choose_embedding_length
from .datagen import Population, load_features, synth_population
from .errors import ConfigurationError
from .network import ModelConfig, compact_architecture, speech_architecture

MODEL_PRESETS = ("compact", "speech")


@dataclass(frozen=True)
class SyntheticData:
    participants: int
    unseen: int = 0
    input_length: int = 256
    separation: float = 6.0
    noise: float = 0.5
    train_samples: int = 15
    validation_samples: int = 5
    warmup_samples: int = 5
    test_samples: int = 5
    unseen_test_samples: int = 10


@dataclass(frozen=True)
class FeatureData:
    path: str


@dataclass(frozen=True)
class RunConfig:
    seed: int
    rounds: int
    client_fraction: float
    local_epochs: int
    batch_size: int
    learning_rate: float
    embedding_length: Optional[int]
    min_distance: Optional[int]
    confidence: Optional[float]
    model_preset: Optional[str]
    model: Optional[ModelConfig]
    data: Union[SyntheticData, FeatureData]
    tpr_targets: tuple[float, ...]
    log_x: bool
    output_dir: Optional[str]


def _section(doc: dict, name: str, required: bool = True) -> dict:
    value = doc.get(name)
    if value is None:
        if required:
            raise ConfigurationError(f"missing config section {name!r}")
        return {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    return value


def _only_keys(section: dict, name: str, allowed: set[str]) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(f"{name}: unknown keys {sorted(unknown)}")


def parse_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigurationError("run config must be a JSON object")
    _only_keys(doc, "config",
               {"seed", "output_dir", "federated", "embedding", "model",
                "data", "evaluation"})

    fed = _section(doc, "federated")
    _only_keys(fed, "federated",
               {"rounds", "client_fraction", "local_epochs", "batch_size",
                "learning_rate"})
    if "rounds" not in fed:
        raise ConfigurationError("federated.rounds is required")

    emb = _section(doc, "embedding")
    _only_keys(emb, "embedding", {"length", "min_distance", "confidence"})
    has_length = "length" in emb
    has_dist = "min_distance" in emb
    if has_length == has_dist:
        raise ConfigurationError(
            "embedding needs exactly one of 'length' or 'min_distance'")
    if has_length and "confidence" in emb:
        raise ConfigurationError("embedding.confidence requires min_distance")

    model = _section(doc, "model", required=False) or {"preset": "compact"}
    if "preset" in model:
        _only_keys(model, "model", {"preset"})
        preset = model["preset"]
        if preset not in MODEL_PRESETS:
            raise ConfigurationError(
                f"model.preset must be one of {MODEL_PRESETS}, got {preset!r}")
        explicit = None
    else:
        preset = None
        explicit = ModelConfig.from_dict(model)

    data = _section(doc, "data")
    source = data.get("source", "synthetic")
    if source == "synthetic":
        _only_keys(data, "data",
                   {"source", "participants", "unseen", "input_length",
                    "separation", "noise", "train_samples", "validation_samples",
                    "warmup_samples", "test_samples", "unseen_test_samples"})
        if "participants" not in data:
            raise ConfigurationError("data.participants is required for synthetic data")
        fields = {k: v for k, v in data.items() if k != "source"}
        try:
            data_cfg: Union[SyntheticData, FeatureData] = SyntheticData(**fields)
        except TypeError as exc:
            raise ConfigurationError(f"data: {exc}") from None
    elif source == "features":
        _only_keys(data, "data", {"source", "path"})
        if "path" not in data:
            raise ConfigurationError("data.path is required for feature data")
        if not Path(data["path"]).is_file():
            raise ConfigurationError(f"feature file not found: {data['path']}")
        data_cfg = FeatureData(path=str(data["path"]))
    else:
        raise ConfigurationError(
            f"data.source must be 'synthetic' or 'features', got {source!r}")

    ev = _section(doc, "evaluation", required=False)
    _only_keys(ev, "evaluation", {"tpr_targets", "log_x"})
    targets = tuple(float(t) for t in ev.get("tpr_targets", (0.8, 0.9)))
    for t in targets:
        if not 0.0 < t <= 1.0:
            raise ConfigurationError(f"tpr target {t} outside (0, 1]")

    try:
        cfg = RunConfig(
            seed=int(doc.get("seed", 0)),
            rounds=int(fed["rounds"]),
            client_fraction=float(fed.get("client_fraction", 5e-3)),
            local_epochs=int(fed.get("local_epochs", 1)),
            batch_size=int(fed.get("batch_size", 8)),
            learning_rate=float(fed.get("learning_rate", 2e-3)),
            embedding_length=int(emb["length"]) if has_length else None,
            min_distance=int(emb["min_distance"]) if has_dist else None,
            confidence=float(emb.get("confidence", 0.9)) if has_dist else None,
            model_preset=preset,
            model=explicit,
            data=data_cfg,
            tpr_targets=targets,
            log_x=bool(ev.get("log_x", False)),
            output_dir=doc.get("output_dir"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None
    if cfg.rounds < 0:
        raise ConfigurationError("federated.rounds must be >= 0")
    if not 0.0 < cfg.client_fraction <= 1.0:
        raise ConfigurationError("federated.client_fraction must be in (0, 1]")
    if cfg.confidence is not None and not 0.0 < cfg.confidence < 1.0:
        raise ConfigurationError("embedding.confidence must be in (0, 1)")
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    return parse_run_config(doc)


def build_population(cfg: RunConfig) -> Population:
    if isinstance(cfg.data, FeatureData):
        return load_features(cfg.data.path)
    d = cfg.data
    return synth_population(
        n_participants=d.participants, n_unseen=d.unseen,
        input_length=d.input_length, separation=d.separation, noise=d.noise,
        seed=cfg.seed, n_train=d.train_samples,
        n_validation=d.validation_samples, n_warmup=d.warmup_samples,
        n_test=d.test_samples, n_unseen_test=d.unseen_test_samples)


def resolve_embedding_length(cfg: RunConfig, n_participants: int) -> int:
    if cfg.embedding_length is not None:
        return cfg.embedding_length
    return choose_embedding_length(n_participants, cfg.min_distance, cfg.confidence)


def resolve_model(cfg: RunConfig, input_length: int, embedding_length: int,
                  ) -> ModelConfig:
    if cfg.model is not None:
        model = cfg.model
        if model.input_length != input_length:
            raise ConfigurationError(
                f"model input_length {model.input_length} does not match "
                f"data input length {input_length}")
        if model.embedding_length != embedding_length:
            raise ConfigurationError(
                f"model embedding_length {model.embedding_length} does not "
                f"match embedding length {embedding_length}")
        return model
    if cfg.model_preset == "speech":
        model = speech_architecture(embedding_length)
        if model.input_length != input_length:
            raise ConfigurationError(
                f"speech preset expects input length {model.input_length}, "
                f"data has {input_length}")
        return model
    return compact_architecture(input_length, embedding_length)
