"""High-level operations behind the service endpoints and CLI commands.

Each function takes a request model, validates everything it can before
touching the filesystem, runs the core package, and returns a response
model.  The FastAPI routes and the CLI are both thin layers over this
module, so an HTTP call and a local command are guaranteed to behave the
same way.
"""
from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np

from . import protocol
from .codebook import choose_embedding_length, load_codebook, min_distance_bound, save_codebook
from .datagen import load_features, save_features, synth_population, write_manifest
from .errors import CalibrationError, ConfigurationError, ParseError
from .evaluation import COHORTS, fpr_at_tpr, roc_curve, score_population, export_report
from .federation import FederatedConfig
from .network import load_checkpoint, save_checkpoint
from .runconfig import (FeatureData, build_population, parse_run_config,
                        resolve_embedding_length, resolve_model)
from .service import schemas


def size_codebook(req: schemas.SizeCodebookRequest) -> schemas.SizeCodebookResponse:
    n_e = choose_embedding_length(req.users, req.min_distance, req.confidence)
    bound = min_distance_bound(req.users, n_e, req.min_distance)
    return schemas.SizeCodebookResponse(embedding_length=n_e,
                                        bound=bound.probability)


def generate_data(req: schemas.GenerateDataRequest) -> schemas.GenerateDataResponse:
    population = synth_population(
        n_participants=req.participants, n_unseen=req.unseen,
        input_length=req.input_length, separation=req.separation,
        noise=req.noise, seed=req.seed, n_train=req.train_samples,
        n_validation=req.validation_samples, n_warmup=req.warmup_samples,
        n_test=req.test_samples, n_unseen_test=req.unseen_test_samples)
    out_path = Path(req.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_features(population, out_path)
    manifest_path = out_path.with_suffix(".manifest.json")
    write_manifest(population, manifest_path)
    return schemas.GenerateDataResponse(
        features_path=str(out_path), manifest_path=str(manifest_path),
        participants=len(population.participants), unseen=len(population.unseen),
        input_length=population.input_length)


def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    cfg = parse_run_config(req.config)
    if req.seed is not None:
        cfg = dataclasses.replace(cfg, seed=req.seed)
    out_dir = req.output_dir or cfg.output_dir
    if not out_dir:
        raise ConfigurationError("no output directory given (flag or config)")

    # validate everything before creating any output
    population = build_population(cfg)
    if not population.participants:
        raise ConfigurationError("population has no participants")
    n_participants = len(population.participants)
    embedding_length = resolve_embedding_length(cfg, n_participants)
    model_config = resolve_model(cfg, population.input_length, embedding_length)
    model_config.build_layers()
    fed_config = FederatedConfig(
        n_users=n_participants, client_fraction=cfg.client_fraction,
        local_epochs=cfg.local_epochs, batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate, rounds=cfg.rounds, seed=cfg.seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    round_log_path = out / "rounds.csv"
    params, book = protocol.run_fedua(
        fed_config, model_config, population.participants,
        codebook_seed=cfg.seed, embedding_length=embedding_length,
        threads=req.threads, round_log_path=round_log_path)

    checkpoint_path = out / "checkpoint.json"
    codebook_path = out / "codebook.json"
    save_checkpoint(checkpoint_path, model_config, params)
    save_codebook(book, codebook_path)
    if isinstance(cfg.data, FeatureData):
        population_path = str(Path(cfg.data.path).resolve())
    else:
        population_path = str(out / "population.csv")
        save_features(population, population_path)

    final_loss = None
    with open(round_log_path, newline="") as fh:
        for row in csv.DictReader(fh):
            final_loss = float(row["mean_client_loss"])
    return schemas.TrainResponse(
        checkpoint_path=str(checkpoint_path), codebook_path=str(codebook_path),
        round_log_path=str(round_log_path), population_path=population_path,
        embedding_length=embedding_length, participants=n_participants,
        unseen=len(population.unseen), rounds=cfg.rounds,
        final_mean_loss=final_loss)


def calibrate(req: schemas.CalibrateRequest) -> schemas.CalibrateResponse:
    config, params = load_checkpoint(req.checkpoint_path)
    book = load_codebook(req.codebook_path)
    population = load_features(req.population_path)
    results = []
    for client in sorted(population.participants, key=lambda c: c.user_id):
        if client.user_id not in book:
            raise ValueError(f"codebook has no embedding for user {client.user_id}")
        if client.warmup.shape[0] == 0:
            raise CalibrationError(f"user {client.user_id} has no warm-up samples")
        results.append(protocol.warm_up_threshold(
            params, config, book[client.user_id], client.warmup, req.tpr))
    out_path = Path(req.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    protocol.save_calibrations(results, out_path)
    rows = [schemas.CalibrationRow(user_id=r.user_id, k=r.k, r=r.r, tau=r.tau)
            for r in results]
    return schemas.CalibrateResponse(calibration_path=str(out_path), rows=rows)


def _load_sample(req: schemas.AuthenticateRequest, input_length: int) -> np.ndarray:
    if (req.sample is None) == (req.sample_path is None):
        raise ValueError("provide exactly one of sample or sample_path")
    if req.sample is not None:
        values = np.asarray(req.sample, dtype=np.float64)
    else:
        text = Path(req.sample_path).read_text()
        try:
            values = np.asarray([float(v) for v in text.replace(",", " ").split()],
                                dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"sample file: {exc}") from None
    if values.size != input_length:
        raise ValueError(
            f"sample has {values.size} values, model expects {input_length}")
    return values.reshape(1, 1, input_length)


def authenticate(req: schemas.AuthenticateRequest) -> schemas.AuthenticateResponse:
    config, params = load_checkpoint(req.checkpoint_path)
    book = load_codebook(req.codebook_path)
    calibrations = protocol.load_calibrations(req.calibration_path)
    if req.user_id not in book:
        raise ValueError(f"codebook has no embedding for user {req.user_id}")
    if req.user_id not in calibrations:
        raise ValueError(f"no calibration for user {req.user_id}")
    sample = _load_sample(req, config.input_length)
    decision = protocol.authenticate(params, config, book[req.user_id],
                                     calibrations[req.user_id].tau, sample)
    return schemas.AuthenticateResponse(verdict=decision.verdict,
                                        score=decision.score,
                                        tau=decision.tau, user_id=req.user_id)


def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
    config, params = load_checkpoint(req.checkpoint_path)
    book = load_codebook(req.codebook_path)
    population = load_features(req.population_path)
    for target in req.tpr_targets:
        if not 0.0 < target <= 1.0:
            raise ValueError(f"tpr target {target} outside (0, 1]")
    curves = {}
    metrics = []
    for cohort in COHORTS:
        scores = score_population(params, config, book, population, cohort)
        if not scores.genuine or not scores.imposter:
            continue  # cohort absent from this population (e.g. no unseen users)
        curve = roc_curve(scores)
        curves[cohort] = curve
        metrics.append(schemas.CohortMetrics(
            cohort=cohort, auc=curve.auc,
            genuine_count=len(scores.genuine),
            imposter_count=len(scores.imposter),
            fpr_at_tpr={repr(t): fpr_at_tpr(curve, t) for t in req.tpr_targets}))
    if not curves:
        raise ValueError("population yields no scoreable cohort")
    paths = export_report(curves, req.output_dir, log_x=req.log_x)
    return schemas.EvaluateResponse(
        report_paths={k: str(p) for k, p in paths.items()}, cohorts=metrics)
