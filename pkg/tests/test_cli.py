import csv
import json

import numpy as np
import pytest

from segcast.checkpoint import save_params
from segcast.cli import main
from segcast.config import ModelConfig, write_config
from segcast.model import Forecaster
from segcast.synth import WindowDataset, load_window_dataset


TINY = ModelConfig(context_len=64, horizon=16, segment_len=8, hidden_dim=8, heads=2,
                   experts=2, top_k=1, n_exo=1, refine_mode="scrn", epochs=2,
                   batch_size=8, lr=1e-3, seed=3)


def write_tiny_config(path):
    write_config(TINY, path)
    return path


def gen_dataset(tmp_path, n=24, seed=5):
    out = tmp_path / "data"
    rc = main(["gen", "--out", str(out), "--windows", str(n), "--context", "64",
               "--horizon", "16", "--seed", str(seed)])
    assert rc == 0
    return out


def test_gen_is_deterministic(tmp_path):
    a = gen_dataset(tmp_path / "a", seed=7)
    b = gen_dataset(tmp_path / "b", seed=7)
    assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()
    assert (a / "labels.csv").read_bytes() == (b / "labels.csv").read_bytes()


def test_train_eval_flow(tmp_path):
    data = gen_dataset(tmp_path)
    cfg_path = write_tiny_config(tmp_path / "run.cfg")
    train_out = tmp_path / "train"
    rc = main(["train", "--config", str(cfg_path), "--data", str(data),
               "--out", str(train_out)])
    assert rc == 0
    for name in ("checkpoint.txt", "metrics.csv", "loss_curves.png",
                 "manifest.json", "config.snapshot.cfg"):
        assert (train_out / name).exists(), name

    eval_out = tmp_path / "eval"
    rc = main(["eval", "--config", str(cfg_path), "--checkpoint",
               str(train_out / "checkpoint.txt"), "--data", str(data),
               "--out", str(eval_out)])
    assert rc == 0
    for name in ("eval.csv", "predictions.csv", "forecast.png", "manifest.json"):
        assert (eval_out / name).exists(), name

    manifest = json.loads((eval_out / "manifest.json").read_text())
    assert manifest["command"] == "eval"
    assert set(manifest["inputs"]) == {"config", "checkpoint", "data", "labels"}
    for entry in manifest["inputs"].values():
        assert len(entry["sha256"]) == 64


def test_eval_metrics_match_exported_predictions(tmp_path):
    # the two-line reference: recompute MSE/MAE from predictions.csv
    data = gen_dataset(tmp_path)
    cfg_path = write_tiny_config(tmp_path / "run.cfg")
    train_out, eval_out = tmp_path / "t", tmp_path / "e"
    main(["train", "--config", str(cfg_path), "--data", str(data), "--out", str(train_out)])
    main(["eval", "--config", str(cfg_path), "--checkpoint",
          str(train_out / "checkpoint.txt"), "--data", str(data), "--out", str(eval_out)])

    ds = load_window_dataset(data / "data.csv", data / "labels.csv", 64, 16)
    preds = np.zeros_like(ds.futures)
    with open(eval_out / "predictions.csv") as fh:
        for row in csv.DictReader(fh):
            preds[int(row["window"]), int(row["channel"]), int(row["step"])] = float(row["value"])

    reported = {}
    with open(eval_out / "eval.csv") as fh:
        for row in csv.DictReader(fh):
            reported[row["metric"]] = float(row["value"])

    assert abs(reported["mse"] - ((preds - ds.futures) ** 2).mean()) < 1e-12
    assert abs(reported["mae"] - np.abs(preds - ds.futures).mean()) < 1e-12


def test_eval_zero_error_on_model_consistent_targets(tmp_path):
    # a checkpoint whose predictions *are* the dataset futures scores MSE ~ 0
    data = gen_dataset(tmp_path)
    cfg_path = write_tiny_config(tmp_path / "run.cfg")
    ds = load_window_dataset(data / "data.csv", data / "labels.csv", 64, 16)

    model = Forecaster(TINY)
    fut = model.predict(ds.contexts)
    WindowDataset(ds.contexts, fut, ds.labels).save(data / "data.csv", data / "labels.csv")
    ckpt = tmp_path / "ck.txt"
    save_params(model.params, ckpt)

    eval_out = tmp_path / "e0"
    rc = main(["eval", "--config", str(cfg_path), "--checkpoint", str(ckpt),
               "--data", str(data), "--out", str(eval_out)])
    assert rc == 0
    with open(eval_out / "eval.csv") as fh:
        metrics = {r["metric"]: float(r["value"]) for r in csv.DictReader(fh)}
    assert metrics["mse"] < 1e-9


def test_bench_cardinality_and_figure(tmp_path):
    out = tmp_path / "bench"
    rc = main(["bench", "--out", str(out), "--horizons", "96,192,336,720",
               "--reps", "3", "--width", "64", "--seg-len", "48", "--parallel-heads"])
    assert rc == 0
    lines = (out / "bench.csv").read_text().splitlines()
    assert len(lines) == 9                      # header + 2 modes x 4 horizons
    assert (out / "latency.png").exists()
    assert (out / "manifest.json").exists()


def test_gradcheck_default_passes():
    assert main(["gradcheck"]) == 0


def test_gradcheck_custom_config(tmp_path):
    cfg_path = write_tiny_config(tmp_path / "run.cfg")
    assert main(["gradcheck", "--config", str(cfg_path), "--tol", "1e-4"]) == 0


def test_ablate_produces_table(tmp_path):
    out = tmp_path / "abl"
    rc = main(["ablate", "--out", str(out), "--windows", "64", "--epochs", "1"])
    assert rc == 0
    with open(out / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["name"] for r in rows] == ["baseline", "+exo", "+exo+moe",
                                         "+exo+moe+scrn", "+exo+moe+scad"]
    for r in rows:
        assert np.isfinite(float(r["mse"])) and np.isfinite(float(r["final_train_loss"]))
    assert (out / "ablation.png").exists()


# --- failure modes -----------------------------------------------------------------

def test_unknown_subcommand_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["transmogrify"])
    assert exc.value.code == 2


def test_malformed_config_is_usage_error(tmp_path):
    data = gen_dataset(tmp_path)
    bad = tmp_path / "bad.cfg"
    bad.write_text("context_len = sixty-four\n")
    rc = main(["train", "--config", str(bad), "--data", str(data),
               "--out", str(tmp_path / "out")])
    assert rc == 2


def test_missing_data_is_usage_error(tmp_path):
    cfg_path = write_tiny_config(tmp_path / "run.cfg")
    rc = main(["train", "--config", str(cfg_path), "--data", str(tmp_path / "nope"),
               "--out", str(tmp_path / "out")])
    assert rc == 2


def test_bad_bench_horizon_is_usage_error(tmp_path):
    rc = main(["bench", "--out", str(tmp_path / "b"), "--horizons", "100",
               "--reps", "1"])
    assert rc == 2
