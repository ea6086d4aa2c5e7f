"""Scoring a trained model over a population and ROC-based evaluation.

Genuine attempts score a user's samples against that user's own embedding;
imposter attempts score samples against embeddings of other users (the full
cross-product, for statistical stability).  Three cohorts mirror how the
authentication quality degrades:

* ``train``       genuine/imposter scores over participants' training data.
* ``validation``  the same over participants' held-out samples.
* ``unseen``      imposter scores come from users who never participated in
                  training, claimed against every participant identity; the
                  genuine side reuses participants' validation attempts,
                  since unseen users have no enrolled embedding of their own.

A ROC curve sweeps the accept threshold over all observed scores (accept
iff score <= threshold), so it starts at (0, 0), ends at (1, 1), and is
non-decreasing in both coordinates.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .codebook import Codebook
from .datagen import Population
from .errors import ParseError
from .network import ModelConfig, ModelParams, Network

COHORTS = ("train", "validation", "unseen")

_EVAL_BATCH = 32


@dataclass
class ScoreSet:
    cohort: str
    genuine: list[tuple[int, float]]    # (user_id, squared distance)
    imposter: list[tuple[int, float]]   # (claimed_user_id, squared distance)

    def genuine_values(self) -> np.ndarray:
        return np.asarray([s for _, s in self.genuine], dtype=np.float64)

    def imposter_values(self) -> np.ndarray:
        return np.asarray([s for _, s in self.imposter], dtype=np.float64)


@dataclass
class RocCurve:
    thresholds: np.ndarray  # ascending, starts below every score
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _predict(net: Network, samples: np.ndarray) -> np.ndarray:
    chunks = [net.forward(samples[i:i + _EVAL_BATCH])
              for i in range(0, samples.shape[0], _EVAL_BATCH)]
    return np.concatenate(chunks)


def _distances(preds: np.ndarray, bits: np.ndarray) -> np.ndarray:
    diff = preds - bits.astype(np.float64)
    return (diff ** 2).sum(axis=1)


def score_population(params: ModelParams, config: ModelConfig, book: Codebook,
                     population: Population, cohort: str) -> ScoreSet:
    """Genuine and imposter squared-distance scores for one cohort."""
    if cohort not in COHORTS:
        raise ValueError(f"cohort must be one of {COHORTS}, got {cohort!r}")
    participants = sorted(population.participants, key=lambda c: c.user_id)
    for client in participants:
        if client.user_id not in book:
            raise ValueError(f"codebook has no embedding for user {client.user_id}")
    net = Network(config, params)

    genuine: list[tuple[int, float]] = []
    imposter: list[tuple[int, float]] = []

    def cross_score(samples: np.ndarray, own_id: Optional[int]) -> None:
        if samples.shape[0] == 0:
            return
        preds = _predict(net, samples)
        for claimed in sorted(book.user_ids):
            scores = _distances(preds, book[claimed].bits)
            target = genuine if claimed == own_id else imposter
            target.extend((claimed, float(s)) for s in scores)

    if cohort in ("train", "validation"):
        for client in participants:
            cross_score(client.split(cohort), client.user_id)
    else:
        # genuine attempts: participants' held-out validation samples
        for client in participants:
            if client.validation.shape[0] == 0:
                continue
            preds = _predict(net, client.validation)
            scores = _distances(preds, book[client.user_id].bits)
            genuine.extend((client.user_id, float(s)) for s in scores)
        for client in sorted(population.unseen, key=lambda c: c.user_id):
            cross_score(client.test, own_id=None)
    return ScoreSet(cohort=cohort, genuine=genuine, imposter=imposter)


def roc_curve(scores: ScoreSet) -> RocCurve:
    """Threshold sweep over the union of scores; accept iff score <= t."""
    genuine = np.sort(scores.genuine_values())
    imposter = np.sort(scores.imposter_values())
    if genuine.size == 0 or imposter.size == 0:
        raise ValueError("need at least one genuine and one imposter score")
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([genuine, imposter]))])
    tpr = np.searchsorted(genuine, thresholds, side="right") / genuine.size
    fpr = np.searchsorted(imposter, thresholds, side="right") / imposter.size
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc)


def fpr_at_tpr(curve: RocCurve, tpr_target: float) -> float:
    """Smallest false-positive rate among points reaching the target TPR."""
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError("tpr_target must be in (0, 1]")
    qualifying = np.nonzero(curve.tpr >= tpr_target)[0]
    return float(curve.fpr[qualifying[0]])


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")
_LOG_FLOOR = 1e-4


def _roc_svg(curves: dict[str, RocCurve], log_x: bool) -> str:
    width, height = 640, 480
    left, right, top, bottom = 70, 20, 20, 50
    plot_w, plot_h = width - left - right, height - top - bottom

    def x_pos(fpr: float) -> float:
        if log_x:
            clamped = max(fpr, _LOG_FLOOR)
            frac = (math.log10(clamped) - math.log10(_LOG_FLOOR)) / -math.log10(_LOG_FLOOR)
        else:
            frac = fpr
        return left + frac * plot_w

    def y_pos(tpr: float) -> float:
        return top + (1.0 - tpr) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black"/>',
    ]
    if log_x:
        x_ticks = [10.0 ** e for e in range(int(math.log10(_LOG_FLOOR)), 1)]
        x_labels = [f"1e{int(math.log10(v))}" if v < 1 else "1" for v in x_ticks]
    else:
        x_ticks = [i / 5 for i in range(6)]
        x_labels = [f"{v:.1f}" for v in x_ticks]
    for value, label in zip(x_ticks, x_labels):
        px = x_pos(value)
        parts.append(f'<line x1="{px:.2f}" y1="{top + plot_h}" x2="{px:.2f}" '
                     f'y2="{top + plot_h + 5}" stroke="black"/>')
        parts.append(f'<text x="{px:.2f}" y="{top + plot_h + 20}" font-size="12" '
                     f'text-anchor="middle">{label}</text>')
    for i in range(6):
        value = i / 5
        py = y_pos(value)
        parts.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" '
                     f'y2="{py:.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{py + 4:.2f}" font-size="12" '
                     f'text-anchor="end">{value:.1f}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.2f}" y="{height - 12}" font-size="13" '
                 f'text-anchor="middle">false positive rate</text>')
    parts.append(f'<text x="16" y="{top + plot_h / 2:.2f}" font-size="13" '
                 f'text-anchor="middle" transform="rotate(-90 16 '
                 f'{top + plot_h / 2:.2f})">true positive rate</text>')

    for index, (label, curve) in enumerate(sorted(curves.items())):
        color = _COLORS[index % len(_COLORS)]
        coords = " ".join(f"{x_pos(f):.2f},{y_pos(t):.2f}"
                          for f, t in zip(curve.fpr, curve.tpr))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        ly = top + 18 + 18 * index
        parts.append(f'<line x1="{left + plot_w - 150}" y1="{ly - 4}" '
                     f'x2="{left + plot_w - 120}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{left + plot_w - 114}" y="{ly}" font-size="12">'
                     f'{_svg_escape(label)} (auc={curve.auc:.4f})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_report(curves: dict[str, RocCurve], out_dir: str | Path,
                  log_x: bool = False) -> dict[str, Path]:
    """One (threshold, fpr, tpr) CSV per cohort plus an SVG overlay.

    Output bytes depend only on the curves, so identical runs produce
    identical files.
    """
    if not curves:
        raise ValueError("no curves to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for label in sorted(curves):
        curve = curves[label]
        path = out / f"roc_{label}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fpr", "tpr"])
            for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr):
                writer.writerow([repr(float(t)), repr(float(f)), repr(float(r))])
        written[label] = path
    svg_path = out / "roc.svg"
    svg_path.write_text(_roc_svg(curves, log_x))
    written["svg"] = svg_path
    return written


def load_report_csv(path: str | Path) -> RocCurve:
    """Re-parse an exported cohort CSV (round-trips the curve values)."""
    thresholds, fpr, tpr = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["threshold", "fpr", "tpr"]:
            raise ParseError(f"bad report header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                thresholds.append(float(row[0]))
                fpr.append(float(row[1]))
                tpr.append(float(row[2]))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno) from None
    fpr_arr = np.asarray(fpr)
    tpr_arr = np.asarray(tpr)
    return RocCurve(thresholds=np.asarray(thresholds), fpr=fpr_arr, tpr=tpr_arr,
                    auc=float(np.trapezoid(tpr_arr, fpr_arr)))
