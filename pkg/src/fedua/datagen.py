"""Per-user datasets: synthetic waveform generation and feature-file I/O.

Real deployments would collect audio per user; the simulator instead gives
every user a fixed smooth "signature" waveform (a few random sinusoids)
and draws samples as signature + white noise.  ``separation`` scales the
signature energy and ``noise`` the perturbation, so their ratio controls
how distinguishable users are.  Generation is a pure function of the seed:
every split of every user has its own derived stream.

Externally prepared data enters through a CSV schema with one sample per
row: ``user_id, split, sample_index, f0..f{L-1}``.  Participants use split
labels train/validation/warmup/test; users that did not take part in
training carry the single label ``unseen``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError
from .rng import make_rng

FEATURE_HEADER_PREFIX = "# fedua-features v1"
PARTICIPANT_SPLITS = ("train", "validation", "warmup", "test")
UNSEEN_SPLIT = "unseen"


@dataclass
class ClientDataset:
    """One user's local samples.  Unseen users hold test data only."""

    user_id: int
    train: np.ndarray       # [n_train, 1, L]
    warmup: np.ndarray      # [k, 1, L]
    validation: np.ndarray  # [n_val, 1, L]
    test: np.ndarray        # [n_test, 1, L]

    def __post_init__(self):
        lengths = set()
        for name in PARTICIPANT_SPLITS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 3 or arr.shape[1] != 1:
                raise ValueError(f"{name} split must have shape [n, 1, L]")
            lengths.add(arr.shape[2])
            setattr(self, name, arr)
        if len(lengths) != 1:
            raise ValueError("all splits must share one input length")

    @property
    def input_length(self) -> int:
        return self.train.shape[2]

    @property
    def n_train(self) -> int:
        return self.train.shape[0]

    def split(self, name: str) -> np.ndarray:
        if name not in PARTICIPANT_SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


@dataclass
class Population:
    participants: list[ClientDataset]
    unseen: list[ClientDataset]
    seed: Optional[int] = None
    separation: Optional[float] = None
    noise: Optional[float] = None

    def __post_init__(self):
        p_ids = {c.user_id for c in self.participants}
        u_ids = {c.user_id for c in self.unseen}
        if len(p_ids) != len(self.participants) or len(u_ids) != len(self.unseen):
            raise ValueError("duplicate user ids")
        if p_ids & u_ids:
            raise ValueError("participant and unseen user ids overlap")

    @property
    def input_length(self) -> int:
        for client in self.participants + self.unseen:
            return client.input_length
        raise ValueError("population is empty")

    def participant_ids(self) -> list[int]:
        return sorted(c.user_id for c in self.participants)

    def by_id(self, user_id: int) -> ClientDataset:
        for client in self.participants + self.unseen:
            if client.user_id == user_id:
                return client
        raise KeyError(user_id)


def _signature(input_length: int, separation: float, seed: int, user_id: int,
               ) -> np.ndarray:
    rng = make_rng(seed, "signature", user_id)
    t = np.arange(input_length) / input_length
    wave = np.zeros(input_length)
    for _ in range(3):
        freq = rng.uniform(1.0, input_length / 8.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        wave += amp * np.sin(2.0 * np.pi * freq * t + phase)
    wave /= np.sqrt(np.mean(wave ** 2))
    return separation * wave


def _noisy_samples(signature: np.ndarray, count: int, noise: float, seed: int,
                   user_id: int, label: str) -> np.ndarray:
    length = signature.size
    if count == 0:
        return np.zeros((0, 1, length))
    rng = make_rng(seed, "samples", user_id, label)
    samples = signature[None, :] + noise * rng.standard_normal((count, length))
    return samples[:, None, :]


def synth_population(n_participants: int, n_unseen: int, input_length: int,
                     separation: float, noise: float, seed: int,
                     n_train: int = 15, n_validation: int = 5,
                     n_warmup: int = 5, n_test: int = 5,
                     n_unseen_test: int = 10) -> Population:
    """Generate a deterministic synthetic population.

    Participants get all four splits; unseen users only test samples.
    """
    if separation <= 0 or noise < 0:
        raise ValueError("separation must be > 0 and noise >= 0")
    if input_length < 4:
        raise ValueError("input_length must be >= 4")
    if n_participants < 1:
        raise ValueError("need at least one participant")
    if min(n_train, n_validation, n_warmup, n_test, n_unseen_test) < 1:
        raise ValueError("split sizes must be >= 1")

    def make_client(uid: int, counts: dict[str, int]) -> ClientDataset:
        sig = _signature(input_length, separation, seed, uid)
        splits = {name: _noisy_samples(sig, counts.get(name, 0), noise, seed, uid, name)
                  for name in PARTICIPANT_SPLITS}
        return ClientDataset(user_id=uid, **splits)

    participant_counts = {"train": n_train, "validation": n_validation,
                          "warmup": n_warmup, "test": n_test}
    participants = [make_client(uid, participant_counts)
                    for uid in range(n_participants)]
    unseen = [make_client(uid, {"test": n_unseen_test})
              for uid in range(n_participants, n_participants + n_unseen)]
    return Population(participants=participants, unseen=unseen, seed=seed,
                      separation=separation, noise=noise)


def paper_shaped_split(samples: np.ndarray, user_id: int, unseen: bool = False,
                       warmup_count: Optional[int] = None) -> ClientDataset:
    """Deterministic index split: 15 train / 5 validation per participant,
    10 test samples per unseen user.

    By default the warm-up set aliases the validation samples; pass
    ``warmup_count`` to carve a disjoint warm-up set from the samples after
    index 20 instead.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or samples.shape[1] != 1:
        raise ValueError("samples must have shape [n, 1, L]")
    n, _, length = samples.shape
    empty = np.zeros((0, 1, length))
    if unseen:
        if n < 10:
            raise ValueError(f"unseen user needs >= 10 samples, got {n}")
        return ClientDataset(user_id=user_id, train=empty, warmup=empty,
                             validation=empty, test=samples[:10])
    if n < 20:
        raise ValueError(f"participant needs >= 20 samples, got {n}")
    train, validation, rest = samples[:15], samples[15:20], samples[20:]
    if warmup_count is None:
        warmup = validation.copy()
    else:
        if rest.shape[0] < warmup_count:
            raise ValueError(
                f"disjoint warm-up needs {warmup_count} extra samples, "
                f"got {rest.shape[0]}")
        warmup, rest = rest[:warmup_count], rest[warmup_count:]
    return ClientDataset(user_id=user_id, train=train, warmup=warmup,
                         validation=validation, test=rest)


def save_features(population: Population, path: str | Path) -> None:
    """Write the population as a feature CSV (lossless for finite floats)."""
    clients = sorted(population.participants, key=lambda c: c.user_id)
    unseen = sorted(population.unseen, key=lambda c: c.user_id)
    length = population.input_length
    lines = []
    meta = [FEATURE_HEADER_PREFIX]
    if population.seed is not None:
        meta.append(f"seed={population.seed}")
    if population.separation is not None:
        meta.append(f"separation={population.separation!r}")
    if population.noise is not None:
        meta.append(f"noise={population.noise!r}")
    lines.append(" ".join(meta))
    header = ["user_id", "split", "sample_index"] + [f"f{i}" for i in range(length)]
    lines.append(",".join(header))

    def emit(client: ClientDataset, split: str, label: str) -> None:
        data = client.split(split)
        for idx in range(data.shape[0]):
            values = ",".join(repr(float(v)) for v in data[idx, 0])
            lines.append(f"{client.user_id},{label},{idx},{values}")

    for client in clients:
        for split in PARTICIPANT_SPLITS:
            emit(client, split, split)
    for client in unseen:
        emit(client, "test", UNSEEN_SPLIT)
    Path(path).write_text("\n".join(lines) + "\n")


def load_features(path: str | Path) -> Population:
    """Parse a feature CSV back into a Population; errors carry line numbers."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty feature file")
    meta: dict[str, str] = {}
    start = 0
    if lines[0].startswith("#"):
        if lines[0].startswith(FEATURE_HEADER_PREFIX):
            for token in lines[0][len(FEATURE_HEADER_PREFIX):].split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    meta[key] = value
        start = 1
    if start >= len(lines):
        raise ParseError("missing header row", line=start + 1)
    header = lines[start].split(",")
    if header[:3] != ["user_id", "split", "sample_index"]:
        raise ParseError("header must start with user_id,split,sample_index",
                         line=start + 1)
    length = len(header) - 3
    if length < 1:
        raise ParseError("no feature columns", line=start + 1)

    rows: dict[tuple[int, str], list[tuple[int, np.ndarray]]] = {}
    seen: set[tuple[int, str, int]] = set()
    for offset, line in enumerate(lines[start + 1:]):
        lineno = start + 2 + offset
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3 + length:
            raise ParseError(
                f"expected {3 + length} fields, got {len(parts)}", line=lineno)
        try:
            uid = int(parts[0])
            sample_index = int(parts[2])
            values = np.asarray([float(v) for v in parts[3:]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        split = parts[1]
        if split not in PARTICIPANT_SPLITS and split != UNSEEN_SPLIT:
            raise ParseError(f"unknown split label {split!r}", line=lineno)
        key = (uid, split, sample_index)
        if key in seen:
            raise ParseError(f"duplicate sample {key}", line=lineno)
        seen.add(key)
        rows.setdefault((uid, split), []).append((sample_index, values))

    if not rows:
        raise ParseError("feature file contains no samples")

    user_splits: dict[int, set[str]] = {}
    for (uid, split) in rows:
        user_splits.setdefault(uid, set()).add(split)

    participants, unseen = [], []
    empty = np.zeros((0, 1, length))
    for uid in sorted(user_splits):
        splits = user_splits[uid]
        if UNSEEN_SPLIT in splits and len(splits) > 1:
            raise ParseError(f"user {uid} mixes 'unseen' with participant splits")

        def stack(split: str) -> np.ndarray:
            entries = rows.get((uid, split))
            if not entries:
                return empty
            entries.sort(key=lambda e: e[0])
            return np.stack([v for _, v in entries])[:, None, :]

        if UNSEEN_SPLIT in splits:
            unseen.append(ClientDataset(user_id=uid, train=empty, warmup=empty,
                                        validation=empty, test=stack(UNSEEN_SPLIT)))
        else:
            participants.append(ClientDataset(
                user_id=uid, train=stack("train"), warmup=stack("warmup"),
                validation=stack("validation"), test=stack("test")))

    def meta_value(key: str, cast):
        return cast(meta[key]) if key in meta else None

    return Population(participants=participants, unseen=unseen,
                      seed=meta_value("seed", int),
                      separation=meta_value("separation", float),
                      noise=meta_value("noise", float))


def write_manifest(population: Population, path: str | Path) -> None:
    """Summary of user ids and split sizes, for quick inspection."""
    doc = {
        "input_length": population.input_length,
        "participants": [
            {"user_id": c.user_id,
             "splits": {name: int(c.split(name).shape[0]) for name in PARTICIPANT_SPLITS}}
            for c in sorted(population.participants, key=lambda c: c.user_id)
        ],
        "unseen": [
            {"user_id": c.user_id, "test_samples": int(c.test.shape[0])}
            for c in sorted(population.unseen, key=lambda c: c.user_id)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
