"""Federated averaging: client sampling, local SGD, weighted aggregation.

Each round the server samples ``m = max(floor(c*n), 1)`` clients, sends the
current weights, lets every sampled client run ``E`` local epochs of batch
SGD on its own data, and replaces the global weights with the sample-count
weighted mean of the returned ones.  Client updates are pure functions of
(weights, local data, derived seed), so they may run in parallel; the
aggregation always consumes them in ascending user id order, making the
result independent of the worker pool size.

As a server-side baseline, ``spreadout_step`` performs one gradient step
that pushes explicitly known embedding vectors apart whenever a pair is
closer (in squared Euclidean distance) than a margin ``nu``.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .datagen import ClientDataset
from .errors import ConfigurationError
from .network import ModelConfig, ModelParams, Network, build_model, save_checkpoint
from .rng import make_rng

# Loss callable: predictions [B, n_e] -> (scalar loss, d loss / d predictions)
LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class FederatedConfig:
    n_users: int
    client_fraction: float   # c in (0, 1]
    local_epochs: int        # E
    batch_size: int          # B
    learning_rate: float     # eta
    rounds: int              # T
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1:
            raise ConfigurationError("n_users must be >= 1")
        if not 0.0 < self.client_fraction <= 1.0:
            raise ConfigurationError("client_fraction must be in (0, 1]")
        if self.local_epochs < 1:
            raise ConfigurationError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.rounds < 0:
            raise ConfigurationError("rounds must be >= 0")

    @property
    def clients_per_round(self) -> int:
        return max(int(self.client_fraction * self.n_users), 1)


@dataclass
class ClientUpdate:
    user_id: int
    params: ModelParams
    sample_count: int
    mean_loss: float


def sample_clients(user_ids: Sequence[int], fraction: float,
                   rng: np.random.Generator) -> list[int]:
    """Uniform subset of max(floor(fraction * n), 1) ids, without replacement."""
    n = len(user_ids)
    if n < 1:
        raise ValueError("no clients to sample from")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    m = max(int(fraction * n), 1)
    picked = rng.choice(n, size=m, replace=False)
    return sorted(user_ids[i] for i in picked)


def _epoch_batches(n_samples: int, batch_size: int,
                   rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n_samples)
    return [order[i:i + batch_size] for i in range(0, n_samples, batch_size)]


def user_update(params: ModelParams, model_config: ModelConfig,
                dataset: ClientDataset, loss_fn: LossFn, *,
                epochs: int, batch_size: int, lr: float,
                seed: int, round_index: int = 0) -> ClientUpdate:
    """Local training on a copy of the broadcast weights.

    The batch order of each epoch comes from a stream derived from
    (seed, user, round, epoch), so a rerun with the same inputs replays the
    exact schedule.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    n_samples = dataset.n_train
    if n_samples < 1:
        raise ValueError(f"user {dataset.user_id} has no training samples")
    net = Network(model_config, params.copy())
    losses = []
    for epoch in range(epochs):
        rng = make_rng(seed, "batches", dataset.user_id, round_index, epoch)
        for batch_idx in _epoch_batches(n_samples, batch_size, rng):
            preds = net.forward(dataset.train[batch_idx])
            value, grad = loss_fn(preds)
            net.backward(grad)
            net.sgd_step(lr)
            losses.append(value)
    return ClientUpdate(user_id=dataset.user_id, params=net.params,
                        sample_count=n_samples,
                        mean_loss=float(np.mean(losses)))


def federated_average(updates: list[ClientUpdate]) -> ModelParams:
    """Sample-count weighted mean, accumulated in ascending user id order.

    Computed as ``w_0 + sum_i n_i (w_i - w_0) / sum_i n_i`` (anchored at the
    lowest user id), which is the same mean but leaves identical inputs
    exactly unchanged.
    """
    if not updates:
        raise ValueError("no client updates to average")
    ordered = sorted(updates, key=lambda u: u.user_id)
    first = ordered[0].params
    for update in ordered[1:]:
        if not first.same_layout(update.params):
            raise ValueError(
                f"client {update.user_id} returned a mismatched parameter layout")
    total = float(sum(u.sample_count for u in ordered))
    out = first.copy()
    for key in first.keys():
        base = first[key].value
        acc = np.zeros_like(base)
        for update in ordered[1:]:
            acc += update.sample_count * (update.params[key].value - base)
        out[key].value = base + acc / total
    return out


def run_fedavg(config: FederatedConfig, clients: list[ClientDataset],
               model_config: ModelConfig,
               loss_factory: Callable[[int], LossFn], *,
               threads: int = 1,
               initial_params: Optional[ModelParams] = None,
               round_log_path: Optional[str | Path] = None,
               checkpoint_every: int = 0,
               checkpoint_dir: Optional[str | Path] = None) -> ModelParams:
    """Run the full protocol and return the final global parameters."""
    if len(clients) != config.n_users:
        raise ValueError(
            f"expected {config.n_users} client datasets, got {len(clients)}")
    by_id = {c.user_id: c for c in clients}
    if len(by_id) != len(clients):
        raise ValueError("duplicate client user ids")
    user_ids = sorted(by_id)
    params = initial_params if initial_params is not None \
        else build_model(model_config, config.seed)

    log_rows = []
    for round_index in range(1, config.rounds + 1):
        started = time.perf_counter()
        round_rng = make_rng(config.seed, "sample", round_index)
        selected = sample_clients(user_ids, config.client_fraction, round_rng)

        def train_one(uid: int) -> ClientUpdate:
            return user_update(params, model_config, by_id[uid],
                               loss_factory(uid),
                               epochs=config.local_epochs,
                               batch_size=config.batch_size,
                               lr=config.learning_rate,
                               seed=config.seed, round_index=round_index)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                updates = list(pool.map(train_one, selected))
        else:
            updates = [train_one(uid) for uid in selected]
        params = federated_average(updates)
        elapsed = time.perf_counter() - started
        mean_loss = float(np.mean([u.mean_loss for u in updates]))
        log_rows.append((round_index, ";".join(str(u) for u in selected),
                         mean_loss, elapsed))
        if checkpoint_every and checkpoint_dir and round_index % checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"round_{round_index:05d}.json",
                            model_config, params)

    if round_log_path is not None:
        with open(round_log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "sampled_ids", "mean_client_loss", "wall_time"])
            writer.writerows(log_rows)
    return params


def spreadout_regularizer(embeddings: np.ndarray, nu: float) -> float:
    """Sum over ordered pairs of squared hinge on the margin ``nu``."""
    y = np.asarray(embeddings, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 2:
        raise ValueError("need >= 2 embeddings of equal length")
    sq = (y ** 2).sum(axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (y @ y.T)
    hinge = np.maximum(0.0, nu - dist)
    np.fill_diagonal(hinge, 0.0)
    return float((hinge ** 2).sum())


def spreadout_step(embeddings: np.ndarray, nu: float, step: float) -> np.ndarray:
    """One gradient-descent step on the spreadout regularizer.

    Pairs already separated by at least ``nu`` contribute nothing and stay
    fixed; coincident pairs have a vanishing distance gradient and also stay
    fixed (a documented degenerate case).
    """
    if nu <= 0 or step <= 0:
        raise ValueError("nu and step must be > 0")
    y = np.asarray(embeddings, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 2:
        raise ValueError("need >= 2 embeddings of equal length")
    sq = (y ** 2).sum(axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (y @ y.T)
    hinge = np.maximum(0.0, nu - dist)
    np.fill_diagonal(hinge, 0.0)
    # d reg / d y_u = -8 * sum_v hinge_uv * (y_u - y_v)
    grad = -8.0 * (hinge.sum(axis=1)[:, None] * y - hinge @ y)
    return y - step * grad
