"""Random binary embedding codebooks and their separation guarantees.

Each user independently draws a fair-coin binary vector of length ``n_e``
as its reference embedding.  The server never sees the vectors; it only
picks ``n_e`` large enough that the minimum pairwise Hamming distance
exceeds a target with high probability.  The probability is bounded below
by

    P(d_min >= tau) >= prod_{k=0}^{n-1} (1 - k * V_tau / 2^n_e)

where ``V_tau`` counts the binary vectors strictly closer than ``tau`` to
a fixed vector.  The bound is evaluated in exact big-integer arithmetic
(2^n_e overflows machine words for realistic lengths) and reduced to a
float only at the end.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError
from .rng import make_rng

CODEBOOK_FORMAT = "fedua-codebook"
CODEBOOK_VERSION = 1


@dataclass
class BinaryEmbedding:
    user_id: int
    bits: np.ndarray  # uint8 values in {0, 1}

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size < 1:
            raise ValueError("embedding must be a non-empty 1-D bit vector")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("embedding bits must be 0 or 1")
        self.bits = bits

    @property
    def length(self) -> int:
        return self.bits.size


@dataclass
class Codebook:
    n_e: int
    seed: int
    embeddings: dict[int, BinaryEmbedding]

    def __post_init__(self):
        for uid, emb in self.embeddings.items():
            if emb.length != self.n_e:
                raise ValueError(f"user {uid}: embedding length {emb.length} != {self.n_e}")

    @property
    def user_ids(self) -> list[int]:
        return sorted(self.embeddings)

    def __len__(self) -> int:
        return len(self.embeddings)

    def __getitem__(self, user_id: int) -> BinaryEmbedding:
        return self.embeddings[user_id]

    def __contains__(self, user_id: int) -> bool:
        return user_id in self.embeddings

    def bit_matrix(self) -> np.ndarray:
        """Bits stacked in ascending user id order, shape [n, n_e]."""
        return np.stack([self.embeddings[uid].bits for uid in self.user_ids])


@dataclass(frozen=True)
class DistanceBound:
    n: int
    n_e: int
    tau: int
    probability: float


def generate_embedding(n_e: int, rng: np.random.Generator, user_id: int = 0,
                       ) -> BinaryEmbedding:
    """Draw each bit independently with probability 1/2."""
    if n_e < 1:
        raise ValueError("n_e must be >= 1")
    return BinaryEmbedding(user_id=user_id, bits=rng.integers(0, 2, size=n_e, dtype=np.uint8))


def user_embedding_rng(seed: int, user_id: int) -> np.random.Generator:
    """The stream user ``user_id`` draws its embedding from; no coordination needed."""
    return make_rng(seed, "embedding", user_id)


def _codebook_bits(n_e: int, user_ids: Sequence[int], seed: int) -> np.ndarray:
    bits = np.empty((len(user_ids), n_e), dtype=np.uint8)
    for row, uid in enumerate(user_ids):
        bits[row] = user_embedding_rng(seed, uid).integers(0, 2, size=n_e, dtype=np.uint8)
    return bits


def build_codebook(n_e: int, user_ids: Iterable[int], seed: int) -> Codebook:
    """Each user's embedding comes from its own derived stream."""
    requested = [int(u) for u in user_ids]
    ids = sorted(set(requested))
    if len(ids) != len(requested):
        raise ValueError("user ids must be unique")
    if n_e < 1:
        raise ValueError("n_e must be >= 1")
    bits = _codebook_bits(n_e, ids, seed)
    embeddings = {uid: BinaryEmbedding(uid, bits[row]) for row, uid in enumerate(ids)}
    return Codebook(n_e=n_e, seed=seed, embeddings=embeddings)


def hamming_distance(a: BinaryEmbedding, b: BinaryEmbedding) -> int:
    if a.length != b.length:
        raise ValueError(f"length mismatch: {a.length} != {b.length}")
    return int(np.count_nonzero(a.bits != b.bits))


def _min_distance_from_bits(bits: np.ndarray) -> int:
    """Minimum pairwise Hamming distance of the rows of a 0/1 matrix."""
    n, n_e = bits.shape
    if n <= 128:
        diff = (bits[:, None, :] != bits[None, :, :]).sum(axis=2)
        iu = np.triu_indices(n, k=1)
        return int(diff[iu].min())
    # d(a, b) = |a| + |b| - 2 a.b; exact in float64 for these magnitudes
    mat = bits.astype(np.float64)
    sums = mat.sum(axis=1)
    best = float(n_e)
    block = max(1, (1 << 22) // n)
    cols = np.arange(n)
    for start in range(0, n - 1, block):
        stop = min(start + block, n - 1)
        gram = mat[start:stop] @ mat.T
        dist = sums[start:stop, None] + sums[None, :] - 2.0 * gram
        upper = cols[None, :] > np.arange(start, stop)[:, None]
        masked = np.where(upper, dist, float(n_e))
        best = min(best, float(masked.min()))
    return int(best)


def min_pairwise_distance(book: Codebook) -> int:
    if len(book) < 2:
        raise ValueError("need at least 2 embeddings")
    return _min_distance_from_bits(book.bit_matrix())


def hamming_ball_volume(n_e: int, tau: int) -> int:
    """Number of vectors at distance < tau from a fixed vector (exact)."""
    if n_e < 1:
        raise ValueError("n_e must be >= 1")
    if tau < 0 or tau > n_e + 1:
        raise ValueError(f"tau must be in [0, {n_e + 1}]")
    return sum(math.comb(n_e, d) for d in range(tau))


def min_distance_bound_exact(n: int, n_e: int, tau: int) -> Fraction:
    """Exact value of the product lower bound, clamped to 0 when vacuous."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= tau <= n_e:
        raise ValueError("tau must satisfy 1 <= tau <= n_e")
    volume = hamming_ball_volume(n_e, tau)
    denominator = 1 << n_e
    numerator = 1
    for k in range(n):
        factor = denominator - k * volume
        if factor <= 0:
            return Fraction(0)
        numerator *= factor
    return Fraction(numerator, denominator ** n)


def min_distance_bound(n: int, n_e: int, tau: int) -> DistanceBound:
    exact = min_distance_bound_exact(n, n_e, tau)
    return DistanceBound(n=n, n_e=n_e, tau=tau, probability=float(exact))


def choose_embedding_length(n: int, tau: int, q: float) -> int:
    """Smallest n_e whose minimum-distance bound reaches confidence q.

    The bound is non-decreasing in n_e and tends to 1, so an exponential
    bracket plus bisection always terminates.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in the open interval (0, 1)")
    target = Fraction(q)
    lo = tau  # largest known-failing length (tau - 1 is inadmissible)
    if min_distance_bound_exact(n, lo, tau) >= target:
        return lo
    hi = 2 * lo
    while min_distance_bound_exact(n, hi, tau) < target:
        lo = hi
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if min_distance_bound_exact(n, mid, tau) >= target:
            hi = mid
        else:
            lo = mid
    return hi


_MC_CHUNK = 256


def sample_min_distances(n: int, n_e: int, trials: int, seed: int) -> np.ndarray:
    """Minimum pairwise distance of ``trials`` independently drawn codebooks.

    Codebooks are drawn in fixed-size chunks, each chunk from its own
    derived stream, so the estimate is deterministic and chunks could be
    evaluated concurrently without changing results.  The bits have the
    same fair-coin distribution as ``build_codebook`` draws.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    out = np.empty(trials, dtype=np.int64)
    for chunk_index, start in enumerate(range(0, trials, _MC_CHUNK)):
        take = min(_MC_CHUNK, trials - start)
        rng = make_rng(seed, "mc-chunk", chunk_index)
        bits = rng.integers(0, 2, size=(take, n, n_e), dtype=np.uint8)
        if n <= 32:
            best = np.full(take, n_e, dtype=np.int64)
            for i in range(n - 1):
                for j in range(i + 1, n):
                    d = (bits[:, i, :] != bits[:, j, :]).sum(axis=1)
                    np.minimum(best, d, out=best)
            out[start:start + take] = best
        else:
            for t in range(take):
                out[start + t] = _min_distance_from_bits(bits[t])
    return out


def empirical_min_distance_probability(n: int, n_e: int, tau: int, trials: int,
                                       seed: int) -> float:
    """Monte-Carlo estimate of P(d_min >= tau); n = 1 has no pairs, so 1.0."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n == 1:
        return 1.0
    sample = sample_min_distances(n, n_e, trials, seed)
    return float(np.mean(sample >= tau))


def save_codebook(book: Codebook, path: str | Path) -> None:
    doc = {
        "format": CODEBOOK_FORMAT,
        "version": CODEBOOK_VERSION,
        "n_e": book.n_e,
        "seed": book.seed,
        "users": {str(uid): "".join(str(b) for b in book[uid].bits)
                  for uid in book.user_ids},
    }
    Path(path).write_text(json.dumps(doc))


def load_codebook(path: str | Path) -> Codebook:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"codebook is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CODEBOOK_FORMAT:
        raise ParseError("not a codebook file")
    if doc.get("version") != CODEBOOK_VERSION:
        raise ParseError(f"unsupported codebook version {doc.get('version')!r}")
    n_e = int(doc["n_e"])
    embeddings = {}
    for uid_text, bit_text in doc["users"].items():
        if len(bit_text) != n_e or set(bit_text) - {"0", "1"}:
            raise ParseError(f"user {uid_text}: malformed bit string")
        bits = np.frombuffer(bit_text.encode(), dtype=np.uint8) - ord("0")
        embeddings[int(uid_text)] = BinaryEmbedding(int(uid_text), bits)
    return Codebook(n_e=n_e, seed=int(doc["seed"]), embeddings=embeddings)
