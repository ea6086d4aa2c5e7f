"""Training toward private binary embeddings, calibration, authentication.

Each user trains the shared model so that its sigmoid outputs correlate
with the user's own binary embedding: with sign vector ``s = 2y - 1`` the
batch loss is ``-(1/B) * sum_j s . y_hat_j`` and its gradient with respect
to each prediction is simply ``-s / B``.  Nothing about other users'
embeddings is needed, which is the point of the scheme.  A centralized
attract/repel loss that does require the full codebook is provided as a
baseline for comparison.

After training, a per-user threshold is calibrated in a warm-up phase: the
user scores ``k`` of its own inputs and sets the threshold to the
``floor(k*r)``-th smallest squared distance, targeting a true-positive
rate of ``r``.  A test sample is accepted when its squared distance to the
reference embedding is at most the threshold (equality accepts).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .codebook import BinaryEmbedding, Codebook, build_codebook, choose_embedding_length
from .datagen import ClientDataset
from .errors import CalibrationError, ParseError, ShapeError
from .federation import FederatedConfig, LossFn, run_fedavg
from .network import ModelConfig, ModelParams, Network

CALIBRATION_HEADER = ["user_id", "k", "r", "tau"]


def correlation_loss(embedding: BinaryEmbedding, predictions: np.ndarray,
                     ) -> tuple[float, np.ndarray]:
    """Negative mean correlation between predictions and the sign pattern.

    Returns the scalar loss and its gradient w.r.t. the predictions, which
    is the constant ``-(2y - 1) / B`` for every row.
    """
    preds = np.asarray(predictions, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[1] != embedding.length:
        raise ValueError(
            f"predictions must have shape [B, {embedding.length}], got {preds.shape}")
    batch = preds.shape[0]
    if batch < 1:
        raise ValueError("need at least one prediction")
    signs = 2.0 * embedding.bits.astype(np.float64) - 1.0
    value = -float((preds @ signs).sum()) / batch
    grad = np.tile(-signs / batch, (batch, 1))
    return value, grad


def correlation_loss_fn(embedding: BinaryEmbedding) -> LossFn:
    return lambda preds: correlation_loss(embedding, preds)


def centralized_ua_loss(book: Codebook, user_id: int, predictions: np.ndarray,
                        repulsion: float) -> tuple[float, np.ndarray]:
    """Attract-to-own / repel-from-others baseline loss (squared Euclidean).

    Requires access to every user's embedding, so it cannot run federated;
    it exists to compare the private scheme against.
    """
    if repulsion < 0:
        raise ValueError("repulsion weight must be >= 0")
    if user_id not in book:
        raise ValueError(f"unknown user {user_id}")
    if len(book) < 2:
        raise ValueError("baseline loss needs at least 2 users in the codebook")
    preds = np.asarray(predictions, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[1] != book.n_e:
        raise ValueError(
            f"predictions must have shape [B, {book.n_e}], got {preds.shape}")
    batch = preds.shape[0]
    own = book[user_id].bits.astype(np.float64)
    value = 0.0
    grad = np.zeros_like(preds)
    for row in range(batch):
        diff_own = preds[row] - own
        value += float(diff_own @ diff_own)
        grad[row] = 2.0 * diff_own
        for uid in book.user_ids:
            if uid == user_id:
                continue
            diff = preds[row] - book[uid].bits.astype(np.float64)
            value -= repulsion * float(diff @ diff)
            grad[row] -= repulsion * 2.0 * diff
    return value / batch, grad / batch


def centralized_ua_loss_fn(book: Codebook, user_id: int, repulsion: float) -> LossFn:
    return lambda preds: centralized_ua_loss(book, user_id, preds, repulsion)


def run_fedua(fed_config: FederatedConfig, model_config: ModelConfig,
              clients: list[ClientDataset], codebook_seed: int, *,
              embedding_length: Optional[int] = None,
              min_dist_tau: Optional[int] = None,
              bound_q: Optional[float] = None,
              threads: int = 1,
              round_log_path: Optional[str | Path] = None,
              ) -> tuple[ModelParams, Codebook]:
    """Full protocol: size the code, draw embeddings, train federated.

    Either ``embedding_length`` is given explicitly or the server derives it
    from a (min_dist_tau, bound_q) separation requirement.  The embedding
    length must match the model's output width.
    """
    sized = min_dist_tau is not None and bound_q is not None
    if sized == (embedding_length is not None):
        raise ValueError(
            "provide exactly one of embedding_length or (min_dist_tau, bound_q)")
    user_ids = [c.user_id for c in clients]
    if sized:
        embedding_length = choose_embedding_length(len(user_ids), min_dist_tau, bound_q)
    if embedding_length != model_config.embedding_length:
        raise ValueError(
            f"embedding length {embedding_length} does not match model output "
            f"width {model_config.embedding_length}")
    book = build_codebook(embedding_length, user_ids, codebook_seed)
    params = run_fedavg(fed_config, clients, model_config,
                        loss_factory=lambda uid: correlation_loss_fn(book[uid]),
                        threads=threads, round_log_path=round_log_path)
    return params, book


def squared_distances(params: ModelParams, config: ModelConfig,
                      embedding: BinaryEmbedding, samples: np.ndarray,
                      batch_size: int = 32) -> np.ndarray:
    """||y - F(x)||^2 for each sample, evaluated in fixed-size batches."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or samples.shape[0] < 1:
        raise ShapeError("samples must have shape [k, 1, L] with k >= 1")
    net = Network(config, params)
    reference = embedding.bits.astype(np.float64)
    chunks = []
    for start in range(0, samples.shape[0], batch_size):
        preds = net.forward(samples[start:start + batch_size])
        diff = preds - reference
        chunks.append((diff ** 2).sum(axis=1))
    return np.concatenate(chunks)


@dataclass
class CalibrationResult:
    user_id: int
    tau: float
    k: int
    r: float
    distances: tuple[float, ...]  # the k warm-up distances, ascending


@dataclass
class AuthDecision:
    accepted: bool
    score: float
    tau: float

    @property
    def verdict(self) -> str:
        return "accept" if self.accepted else "reject"


def calibrate_threshold(distances: np.ndarray, r: float, user_id: int = 0,
                        ) -> CalibrationResult:
    """Threshold = i-th smallest warm-up distance with i = floor(k * r)."""
    values = np.asarray(distances, dtype=np.float64)
    if values.ndim != 1 or values.size < 1:
        raise CalibrationError("need at least one warm-up distance")
    if not 0.0 < r <= 1.0:
        raise CalibrationError("target rate r must be in (0, 1]")
    k = values.size
    index = math.floor(k * r)
    if index < 1:
        raise CalibrationError(
            f"floor(k*r) = 0 with k={k}, r={r}; collect more warm-up samples")
    ordered = np.sort(values)
    return CalibrationResult(user_id=user_id, tau=float(ordered[index - 1]),
                             k=k, r=r, distances=tuple(float(v) for v in ordered))


def warm_up_threshold(params: ModelParams, config: ModelConfig,
                      embedding: BinaryEmbedding, samples: np.ndarray,
                      r: float) -> CalibrationResult:
    """Score the user's own warm-up inputs and pick the rate-r threshold."""
    distances = squared_distances(params, config, embedding, samples)
    return calibrate_threshold(distances, r, user_id=embedding.user_id)


def authenticate(params: ModelParams, config: ModelConfig,
                 embedding: BinaryEmbedding, tau: float,
                 sample: np.ndarray) -> AuthDecision:
    """Accept iff the squared distance to the reference is <= tau."""
    sample = np.asarray(sample, dtype=np.float64)
    if sample.ndim == 2:
        sample = sample[None, :, :]
    if sample.shape[0] != 1:
        raise ShapeError("authenticate scores exactly one sample")
    score = float(squared_distances(params, config, embedding, sample)[0])
    return AuthDecision(accepted=score <= tau, score=score, tau=tau)


def save_calibrations(results: list[CalibrationResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CALIBRATION_HEADER)
        for res in sorted(results, key=lambda r: r.user_id):
            writer.writerow([res.user_id, res.k, repr(res.r), repr(res.tau)])


def load_calibrations(path: str | Path) -> dict[int, CalibrationResult]:
    out: dict[int, CalibrationResult] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CALIBRATION_HEADER:
            raise ParseError(f"bad calibration header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                uid, k, r, tau = int(row[0]), int(row[1]), float(row[2]), float(row[3])
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno) from None
            out[uid] = CalibrationResult(user_id=uid, tau=tau, k=k, r=r, distances=())
    return out
