"""Command-line client for the pipeline.

Every subcommand builds the same request model the HTTP service accepts
and either executes it in-process or, with ``--server URL``, posts it to a
running service.  Exit codes: 0 success (or authentication accept),
1 authentication reject, 2 usage/input error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Callable, Optional, TypeVar

import httpx
from pydantic import BaseModel, ValidationError

from . import __version__, pipeline
from .errors import FeduaError, StateError
from .service import schemas

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

R = TypeVar("R", bound=BaseModel)


class _UsageError(Exception):
    pass


class _RuntimeFailure(Exception):
    pass


def _make_client(server: str) -> httpx.Client:
    return httpx.Client(base_url=server, timeout=600.0)


def _invoke(server: Optional[str], path: str, request: BaseModel,
            response_cls: type[R], local: Callable[[BaseModel], R]) -> R:
    if not server:
        return local(request)
    try:
        with _make_client(server) as client:
            resp = client.post(path, json=request.model_dump())
    except httpx.HTTPError as exc:
        raise _RuntimeFailure(f"request to {server}{path} failed: {exc}") from None
    if resp.status_code in (400, 422):
        raise _UsageError(_detail(resp))
    if resp.status_code != 200:
        raise _RuntimeFailure(f"server returned {resp.status_code}: {_detail(resp)}")
    return response_cls.model_validate(resp.json())


def _detail(resp: httpx.Response) -> str:
    try:
        return json.dumps(resp.json().get("detail"))
    except Exception:
        return resp.text


def _print_kv(pairs: list[tuple[str, object]], fmt: str) -> None:
    if fmt == "csv":
        print(",".join(str(k) for k, _ in pairs))
        print(",".join(str(v) for _, v in pairs))
    else:
        for key, value in pairs:
            print(f"{key}: {value}")


def cmd_size_codebook(args: argparse.Namespace) -> int:
    req = schemas.SizeCodebookRequest(users=args.users, min_distance=args.min_dist,
                                      confidence=args.confidence)
    resp = _invoke(args.server, "/codebook/size", req,
                   schemas.SizeCodebookResponse, pipeline.size_codebook)
    _print_kv([("embedding_length", resp.embedding_length),
               ("bound", repr(resp.bound))], args.format)
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    req = schemas.GenerateDataRequest(
        out_path=args.out, participants=args.participants, unseen=args.unseen,
        input_length=args.input_length, separation=args.separation,
        noise=args.noise, train_samples=args.train_samples,
        validation_samples=args.validation_samples,
        warmup_samples=args.warmup_samples, test_samples=args.test_samples,
        unseen_test_samples=args.unseen_test_samples, seed=args.seed)
    resp = _invoke(args.server, "/data/generate", req,
                   schemas.GenerateDataResponse, pipeline.generate_data)
    _print_kv([("features_path", resp.features_path),
               ("manifest_path", resp.manifest_path),
               ("participants", resp.participants),
               ("unseen", resp.unseen),
               ("input_length", resp.input_length)], args.format)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(open(args.config).read())
    except FileNotFoundError:
        raise _UsageError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config is not valid JSON: {exc}") from None
    req = schemas.TrainRequest(config=doc, output_dir=args.out, seed=args.seed,
                               threads=args.threads)
    resp = _invoke(args.server, "/train", req, schemas.TrainResponse, pipeline.train)
    _print_kv([("checkpoint", resp.checkpoint_path),
               ("codebook", resp.codebook_path),
               ("round_log", resp.round_log_path),
               ("population", resp.population_path),
               ("embedding_length", resp.embedding_length),
               ("participants", resp.participants),
               ("rounds", resp.rounds),
               ("final_mean_loss", resp.final_mean_loss)], args.format)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    req = schemas.CalibrateRequest(
        checkpoint_path=args.checkpoint, codebook_path=args.codebook,
        population_path=args.population, out_path=args.out, tpr=args.tpr)
    resp = _invoke(args.server, "/calibrate", req,
                   schemas.CalibrateResponse, pipeline.calibrate)
    print(f"calibration: {resp.calibration_path} ({len(resp.rows)} users)")
    return EXIT_OK


def cmd_authenticate(args: argparse.Namespace) -> int:
    req = schemas.AuthenticateRequest(
        checkpoint_path=args.checkpoint, codebook_path=args.codebook,
        calibration_path=args.calibration, user_id=args.user,
        sample_path=args.sample)
    resp = _invoke(args.server, "/authenticate", req,
                   schemas.AuthenticateResponse, pipeline.authenticate)
    if args.format == "csv":
        print("verdict,score,tau")
        print(f"{resp.verdict},{resp.score!r},{resp.tau!r}")
    else:
        print(f"{resp.verdict} score={resp.score!r} tau={resp.tau!r}")
    return EXIT_OK if resp.verdict == "accept" else EXIT_REJECT


def cmd_evaluate(args: argparse.Namespace) -> int:
    req = schemas.EvaluateRequest(
        checkpoint_path=args.checkpoint, codebook_path=args.codebook,
        population_path=args.population, output_dir=args.out,
        tpr_targets=args.tpr or [0.8, 0.9], log_x=args.log_x)
    resp = _invoke(args.server, "/evaluate", req,
                   schemas.EvaluateResponse, pipeline.evaluate)
    if args.format == "csv":
        print("cohort,auc,tpr_target,fpr")
        for cohort in resp.cohorts:
            for target, fpr in sorted(cohort.fpr_at_tpr.items()):
                print(f"{cohort.cohort},{cohort.auc!r},{target},{fpr!r}")
    else:
        for cohort in resp.cohorts:
            print(f"[{cohort.cohort}] auc={cohort.auc:.4f} "
                  f"genuine={cohort.genuine_count} imposter={cohort.imposter_count}")
            for target, fpr in sorted(cohort.fpr_at_tpr.items()):
                print(f"  fpr at tpr>={target}: {fpr:.6f}")
        print(f"report: {resp.report_paths.get('svg')}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedua",
        description="Federated user-authentication training and evaluation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--server", default=None,
                       help="URL of a running service; default runs in-process")
        p.add_argument("--format", choices=("human", "csv"), default="human")

    p = sub.add_parser("size-codebook",
                       help="pick the embedding length for a separation target")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--min-dist", type=int, required=True,
                   help="required minimum pairwise Hamming distance")
    p.add_argument("--confidence", type=float, required=True,
                   help="probability the distance target must hold with (0..1)")
    common(p)
    p.set_defaults(fn=cmd_size_codebook)

    p = sub.add_parser("gen-data", help="generate a synthetic population CSV")
    p.add_argument("--out", required=True, help="feature CSV to write")
    p.add_argument("--participants", type=int, required=True)
    p.add_argument("--unseen", type=int, default=0)
    p.add_argument("--input-length", type=int, default=256)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--train-samples", type=int, default=15)
    p.add_argument("--validation-samples", type=int, default=5)
    p.add_argument("--warmup-samples", type=int, default=5)
    p.add_argument("--test-samples", type=int, default=5)
    p.add_argument("--unseen-test-samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="run federated training from a config file")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="overrides config seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for client updates (does not change results)")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("calibrate", help="per-user warm-up threshold calibration")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--population", required=True)
    p.add_argument("--out", required=True, help="calibration CSV to write")
    p.add_argument("--tpr", type=float, default=0.9,
                   help="target true-positive rate")
    common(p)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("authenticate",
                       help="score one sample; exit 0=accept, 1=reject")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--user", type=int, required=True)
    p.add_argument("--sample", required=True,
                   help="text file with the sample's feature values")
    common(p)
    p.set_defaults(fn=cmd_authenticate)

    p = sub.add_parser("evaluate", help="ROC report over a population")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--population", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--tpr", type=float, action="append", default=None,
                   help="TPR target to report FPR at (repeatable)")
    p.add_argument("--log-x", action="store_true",
                   help="logarithmic FPR axis in the SVG")
    common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, FeduaError, ValueError, FileNotFoundError) as exc:
        if isinstance(exc, StateError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
