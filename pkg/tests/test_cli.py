"""Command-line behaviour: outputs, exit codes, determinism, remote mode."""
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from fedua import cli
from fedua.service.app import app


def run_cli(args, capsys=None):
    rc = cli.main(args)
    if capsys is None:
        return rc, ""
    return rc, capsys.readouterr().out


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One tiny trained run shared by the read-only command tests."""
    tmp = tmp_path_factory.mktemp("cli")
    rc = cli.main(["gen-data", "--out", str(tmp / "pop.csv"),
                   "--participants", "3", "--unseen", "1",
                   "--input-length", "32", "--seed", "11",
                   "--train-samples", "6", "--validation-samples", "3",
                   "--warmup-samples", "4", "--test-samples", "2",
                   "--separation", "8", "--noise", "0.4"])
    assert rc == 0
    config = {
        "seed": 11,
        "federated": {"rounds": 30, "client_fraction": 1.0, "batch_size": 4,
                      "learning_rate": 0.05},
        "embedding": {"length": 8},
        "model": {"input_length": 32, "embedding_length": 8,
                  "layers": [{"kind": "fully_connected", "n_in": 32, "n_out": 8},
                             {"kind": "sigmoid"}]},
        "data": {"source": "features", "path": str(tmp / "pop.csv")},
    }
    cfg_path = tmp / "run.json"
    cfg_path.write_text(json.dumps(config))
    rc = cli.main(["train", str(cfg_path), "--out", str(tmp / "run")])
    assert rc == 0
    rc = cli.main(["calibrate", "--checkpoint", str(tmp / "run" / "checkpoint.json"),
                   "--codebook", str(tmp / "run" / "codebook.json"),
                   "--population", str(tmp / "pop.csv"),
                   "--out", str(tmp / "cal.csv"), "--tpr", "0.75"])
    assert rc == 0
    return tmp


def warmup_sample_path(tmp: Path, uid: int) -> Path:
    lines = (tmp / "pop.csv").read_text().splitlines()
    row = next(l for l in lines if l.startswith(f"{uid},warmup,0,"))
    path = tmp / f"sample_{uid}.txt"
    path.write_text(",".join(row.split(",")[3:]))
    return path


def test_size_codebook_output(capsys):
    rc, out = run_cli(["size-codebook", "--users", "4", "--min-dist", "2",
                       "--confidence", "0.9"], capsys)
    assert rc == 0
    assert "embedding_length: 10" in out


def test_size_codebook_csv_format(capsys):
    rc, out = run_cli(["size-codebook", "--users", "4", "--min-dist", "2",
                       "--confidence", "0.9", "--format", "csv"], capsys)
    assert rc == 0
    lines = out.strip().splitlines()
    assert lines[0] == "embedding_length,bound"
    assert lines[1].startswith("10,")


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["size-codebook", "--users", "4"])  # missing required flags
    assert exc.value.code == 2
    rc, _ = run_cli(["size-codebook", "--users", "1", "--min-dist", "2",
                     "--confidence", "0.9"], capsys)
    assert rc == 2
    rc, _ = run_cli(["size-codebook", "--users", "4", "--min-dist", "2",
                     "--confidence", "1.0"], capsys)
    assert rc == 2


def test_train_missing_config_exits_2(tmp_path, capsys):
    rc, _ = run_cli(["train", str(tmp_path / "none.json")], capsys)
    assert rc == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    rc, _ = run_cli(["train", str(bad)], capsys)
    assert rc == 2


def test_train_requires_out_dir(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"federated": {"rounds": 0},
                               "embedding": {"length": 4},
                               "data": {"source": "synthetic", "participants": 2,
                                        "input_length": 16}}))
    rc, _ = run_cli(["train", str(cfg)], capsys)
    assert rc == 2  # neither --out nor config output_dir


def test_authenticate_accept_and_reject(trained, capsys):
    tmp = trained
    base = ["authenticate",
            "--checkpoint", str(tmp / "run" / "checkpoint.json"),
            "--codebook", str(tmp / "run" / "codebook.json"),
            "--calibration", str(tmp / "cal.csv")]
    # calibration at r=0.75 over 4 warm-up samples: the smallest-scoring
    # warm-up sample is always at or below the threshold
    scores = []
    for idx in range(3):
        lines = (tmp / "pop.csv").read_text().splitlines()
        row = next(l for l in lines if l.startswith(f"0,warmup,{idx},"))
        path = tmp / f"s{idx}.txt"
        path.write_text(",".join(row.split(",")[3:]))
        rc, out = run_cli(base + ["--user", "0", "--sample", str(path)], capsys)
        verdict, score_part, tau_part = out.split()
        scores.append((rc, verdict, float(score_part.split("=")[1]),
                       float(tau_part.split("=")[1])))
    assert any(rc == 0 and v == "accept" for rc, v, _, _ in scores)
    for rc, verdict, score, tau in scores:
        assert (rc == 0) == (verdict == "accept") == (score <= tau)

    # an absurd sample is rejected with exit code 1
    far = tmp / "far.txt"
    far.write_text(",".join(["100.0"] * 32))
    rc, out = run_cli(base + ["--user", "0", "--sample", str(far)], capsys)
    assert rc == 1
    assert out.startswith("reject")


def test_authenticate_corrupt_checkpoint_exits_2(trained, tmp_path, capsys):
    tmp = trained
    bad = tmp_path / "corrupt.json"
    bad.write_text('{"format": "fedua-checkpoint", "version": 1, "config": {}')
    sample = warmup_sample_path(tmp, 0)
    rc, _ = run_cli(["authenticate", "--checkpoint", str(bad),
                     "--codebook", str(tmp / "run" / "codebook.json"),
                     "--calibration", str(tmp / "cal.csv"),
                     "--user", "0", "--sample", str(sample)], capsys)
    assert rc == 2


def test_evaluate_outputs(trained, capsys):
    tmp = trained
    rc, out = run_cli(["evaluate",
                       "--checkpoint", str(tmp / "run" / "checkpoint.json"),
                       "--codebook", str(tmp / "run" / "codebook.json"),
                       "--population", str(tmp / "pop.csv"),
                       "--out", str(tmp / "report"),
                       "--tpr", "0.8", "--tpr", "0.9"], capsys)
    assert rc == 0
    assert "[train]" in out and "[validation]" in out and "[unseen]" in out
    assert "fpr at tpr>=0.8" in out
    assert (tmp / "report" / "roc_train.csv").is_file()
    assert (tmp / "report" / "roc.svg").is_file()


def test_train_is_reproducible_byte_for_byte(trained, capsys):
    tmp = trained
    cfg_path = tmp / "run.json"
    rc1, _ = run_cli(["train", str(cfg_path), "--out", str(tmp / "runA")], capsys)
    rc2, _ = run_cli(["train", str(cfg_path), "--out", str(tmp / "runB")], capsys)
    assert rc1 == rc2 == 0
    for name in ("checkpoint.json", "codebook.json"):
        assert (tmp / "runA" / name).read_bytes() == (tmp / "runB" / name).read_bytes()
    # downstream CSV artifacts are byte-identical too (the round log is not:
    # it records wall time by design)
    for run in ("A", "B"):
        rc, _ = run_cli(["calibrate",
                         "--checkpoint", str(tmp / f"run{run}" / "checkpoint.json"),
                         "--codebook", str(tmp / f"run{run}" / "codebook.json"),
                         "--population", str(tmp / "pop.csv"),
                         "--out", str(tmp / f"cal{run}.csv")], capsys)
        assert rc == 0
        rc, _ = run_cli(["evaluate",
                         "--checkpoint", str(tmp / f"run{run}" / "checkpoint.json"),
                         "--codebook", str(tmp / f"run{run}" / "codebook.json"),
                         "--population", str(tmp / "pop.csv"),
                         "--out", str(tmp / f"rep{run}")], capsys)
        assert rc == 0
    assert (tmp / "calA.csv").read_bytes() == (tmp / "calB.csv").read_bytes()
    for name in ("roc_train.csv", "roc_validation.csv", "roc_unseen.csv", "roc.svg"):
        assert (tmp / "repA" / name).read_bytes() == (tmp / "repB" / name).read_bytes()


def test_remote_mode_uses_http_client(monkeypatch, capsys):
    monkeypatch.setattr(cli, "_make_client", lambda server: TestClient(app))
    rc, out = run_cli(["size-codebook", "--users", "4", "--min-dist", "2",
                       "--confidence", "0.9", "--server", "http://testserver"],
                      capsys)
    assert rc == 0
    assert "embedding_length: 10" in out


def test_remote_mode_maps_422_to_usage_error(monkeypatch, capsys):
    monkeypatch.setattr(cli, "_make_client", lambda server: TestClient(app))
    rc, _ = run_cli(["size-codebook", "--users", "1", "--min-dist", "2",
                     "--confidence", "0.9", "--server", "http://testserver"],
                    capsys)
    assert rc == 2
