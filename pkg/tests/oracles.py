"""Independent oracles used by the tests.

Everything here is deliberately brute-force and shares no code with the
implementation paths it checks.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def exhaustive_min_distance_probability(n: int, n_e: int, tau: int) -> Fraction:
    """Exact P(d_min >= tau) by enumerating every ordered codebook tuple."""
    vectors = list(itertools.product((0, 1), repeat=n_e))
    total = 0
    good = 0
    for combo in itertools.product(range(len(vectors)), repeat=n):
        total += 1
        dmin = n_e + 1
        for a, b in itertools.combinations(combo, 2):
            d = sum(x != y for x, y in zip(vectors[a], vectors[b]))
            dmin = min(dmin, d)
        if n == 1 or dmin >= tau:
            good += 1
    return Fraction(good, total)


def brute_force_roc(genuine, imposter):
    """(threshold, fpr, tpr) triples by counting accepts per threshold."""
    scores = sorted(set(list(genuine) + list(imposter)))
    thresholds = [float("-inf")] + scores
    points = []
    for t in thresholds:
        tpr = sum(1 for g in genuine if g <= t) / len(genuine)
        fpr = sum(1 for i in imposter if i <= t) / len(imposter)
        points.append((t, fpr, tpr))
    return points


def brute_force_auc(genuine, imposter):
    """Trapezoid area over the brute-force points."""
    pts = brute_force_roc(genuine, imposter)
    area = 0.0
    for (_, f0, t0), (_, f1, t1) in zip(pts, pts[1:]):
        area += (f1 - f0) * (t0 + t1) / 2.0
    return area


def nearest_centroid_accuracy(population) -> float:
    """Fraction of participant samples nearest to their own signature mean."""
    centroids = {}
    for client in population.participants:
        centroids[client.user_id] = client.train.mean(axis=0)[0]
    correct = 0
    total = 0
    for client in population.participants:
        for split in ("train", "validation", "warmup", "test"):
            for sample in client.split(split):
                dists = {uid: float(((sample[0] - c) ** 2).sum())
                         for uid, c in centroids.items()}
                predicted = min(dists, key=dists.get)
                correct += predicted == client.user_id
                total += 1
    return correct / total


def central_difference(fn, x: np.ndarray, h: float) -> np.ndarray:
    """Elementwise central difference of a scalar function of an array."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def exact_squared_distance(a, b) -> float:
    return math.fsum((float(x) - float(y)) ** 2 for x, y in zip(a, b))
