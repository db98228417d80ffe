"""Command-line surface: gen, train, eval, bench, gradcheck, ablate.

Every artifact-producing run writes a manifest (config snapshot, seed,
content hashes of inputs, output paths) into its output directory, so a run
is reproducible from the manifest alone. Report paths render matplotlib
figures next to the delimited outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import report
from .bench import BenchConfig, DEFAULT_HORIZONS, run_bench, write_bench_csv
from .checkpoint import load_params
from .config import ConfigError, ModelConfig, parse_config, write_config
from .model import Forecaster
from .synth import load_window_dataset, make_spec, mode_metrics
from .training import (
    NumericError,
    end_to_end_gradcheck,
    evaluate,
    predict_batched,
    train,
)

USAGE_ERROR = 2
NUMERIC_ERROR = 3

GRADCHECK_DEFAULT = ModelConfig(
    context_len=64, horizon=16, segment_len=8, hidden_dim=8, heads=2,
    experts=2, top_k=1, n_exo=1, refine_mode="scrn", seed=0)

ABLATION_VARIANTS = (
    ("baseline", dict(head_mode="linear", n_exo=0, refine_mode="none", lambda_aux=0.0)),
    ("+exo", dict(head_mode="linear", refine_mode="none", lambda_aux=0.0)),
    ("+exo+moe", dict(head_mode="moe", refine_mode="none")),
    ("+exo+moe+scrn", dict(head_mode="moe", refine_mode="scrn")),
    ("+exo+moe+scad", dict(head_mode="moe", refine_mode="scad")),
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, seed: int, inputs: dict,
                   outputs: list, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "seed": seed,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)}
                   for name, p in inputs.items()},
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_dataset(data_dir: Path, cfg: ModelConfig):
    data_path = data_dir / "data.csv"
    labels_path = data_dir / "labels.csv"
    if not data_path.exists():
        raise ConfigError(f"no data.csv under {data_dir}")
    return load_window_dataset(data_path, labels_path, cfg.context_len, cfg.horizon), \
        data_path, labels_path


# -- subcommands -----------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_spec(args.modes, amplitude=args.amplitude, noise_std=args.noise_std,
                     channels=args.channels)
    from .synth import generate
    ds = generate(spec, args.windows, args.context, args.horizon, args.seed)
    data_path, labels_path = out / "data.csv", out / "labels.csv"
    ds.save(data_path, labels_path)
    write_manifest(out, "gen", args.seed, inputs={},
                   outputs=[data_path, labels_path],
                   extra={"windows": args.windows, "context": args.context,
                          "horizon": args.horizon, "modes": args.modes,
                          "amplitude": args.amplitude, "noise_std": args.noise_std,
                          "channels": args.channels})
    print(f"wrote {ds.n} windows to {data_path}")
    return 0


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, data_path, labels_path = _load_dataset(Path(args.data), cfg)

    result = train(cfg, ds.contexts, ds.futures, out_dir=out)

    snapshot = out / "config.snapshot.cfg"
    write_config(cfg, snapshot)
    curves = out / "loss_curves.png"
    report.plot_loss_curves(result.metrics, curves)
    write_manifest(out, "train", cfg.seed,
                   inputs={"config": Path(args.config), "data": data_path,
                           "labels": labels_path},
                   outputs=[result.checkpoint_path, result.metrics_path, snapshot, curves])
    final = result.metrics[-1]
    print(f"trained {len(result.metrics)} steps; final total loss {final['total']:.6g}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, data_path, labels_path = _load_dataset(Path(args.data), cfg)

    model = Forecaster(cfg)
    model.params.load_state(load_params(args.checkpoint))

    metrics = evaluate(model, ds.contexts, ds.futures)
    preds = predict_batched(model, ds.contexts)

    rows = [("mse", metrics["mse"]), ("mae", metrics["mae"])]
    for k, v in enumerate(metrics["per_segment_mse"]):
        rows.append((f"segment{k}_mse", v))
    if cfg.head_mode == "moe" and ds.labels.size and len(set(ds.labels.tolist())) > 1:
        expert_preds = model.predict_experts(ds.contexts[:512])
        rep = mode_metrics(expert_preds[:, :, 0, :], ds.futures[:512, 0, :],
                           labels=ds.labels[:512], combined=preds[:512, 0, :],
                           criterion=cfg.criterion)
        rows.extend(rep.rows())

    eval_path = out / "eval.csv"
    with open(eval_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in rows:
            writer.writerow([name, repr(float(value))])

    pred_path = out / "predictions.csv"
    with open(pred_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "channel", "step", "value"])
        for w in range(preds.shape[0]):
            for c in range(preds.shape[1]):
                for s in range(preds.shape[2]):
                    writer.writerow([w, c, s, repr(float(preds[w, c, s]))])

    figure = out / "forecast.png"
    report.plot_forecast(ds.contexts, ds.futures, preds, figure)
    snapshot = out / "config.snapshot.cfg"
    write_config(cfg, snapshot)
    write_manifest(out, "eval", cfg.seed,
                   inputs={"config": Path(args.config), "checkpoint": Path(args.checkpoint),
                           "data": data_path, "labels": labels_path},
                   outputs=[eval_path, pred_path, figure, snapshot])
    for name, value in rows:
        print(f"{name}: {float(value):.6g}")
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = BenchConfig(width=args.width, seg_len=args.seg_len, seed=args.seed,
                      enc_dim=args.enc_dim, batch=args.batch)
    horizons = tuple(int(h) for h in args.horizons.split(","))
    records = run_bench(cfg, horizons=horizons, reps=args.reps,
                        parallel_heads=args.parallel_heads)
    csv_path = out / "bench.csv"
    write_bench_csv(records, csv_path)
    figure = out / "latency.png"
    report.plot_latency(records, figure)
    write_manifest(out, "bench", cfg.seed, inputs={}, outputs=[csv_path, figure],
                   extra={"horizons": list(horizons), "reps": args.reps,
                          "parallel_heads": args.parallel_heads, "width": args.width,
                          "seg_len": args.seg_len})
    print(f"{'mode':>5} {'horizon':>8} {'flops':>12} {'wall_ms':>10}")
    for r in records:
        print(f"{r.mode:>5} {r.horizon:>8} {r.flops:>12} {r.wall_ns / 1e6:>10.3f}")
        for w in r.warnings:
            print(f"      warning: {w}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = parse_config(args.config) if args.config else GRADCHECK_DEFAULT
    report_ = end_to_end_gradcheck(cfg, batch=args.batch, eps=args.eps)
    ok = report_.passed(args.tol)
    print(f"max relative error: {report_.max_rel_err:.3e} (worst: {report_.worst})")
    print(f"{'PASS' if ok else 'FAIL'} at tolerance {args.tol:g}")
    return 0 if ok else NUMERIC_ERROR


def cmd_ablate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = parse_config(args.config) if args.config else ModelConfig(
        context_len=64, horizon=16, segment_len=8, hidden_dim=16, heads=4,
        experts=4, top_k=2, n_exo=2, granularities=(8, 16, 32, 64),
        epochs=args.epochs, batch_size=64, lr=3e-3, seed=0)
    if args.config:
        base = replace(base, epochs=args.epochs)

    from .synth import generate, two_mode_ramp
    spec = two_mode_ramp(amplitude=1.0, noise_std=0.05)
    held = generate(spec, args.windows // 4, base.context_len, base.horizon, seed=base.seed + 1)
    ds = generate(spec, args.windows, base.context_len, base.horizon, seed=base.seed)

    rows = []
    for name, overrides in ABLATION_VARIANTS:
        cfg = replace(base, **overrides).validate()
        result = train(cfg, ds.contexts, ds.futures)
        final = result.metrics[-1]["total"]
        if not np.isfinite(final):
            raise NumericError(f"{name}: training diverged")
        metrics = evaluate(result.model, held.contexts, held.futures)
        rows.append({"name": name, "mse": metrics["mse"], "mae": metrics["mae"],
                     "final_train_loss": final})
        print(f"{name:>16}: mse={metrics['mse']:.4f} mae={metrics['mae']:.4f} "
              f"train_loss={final:.4f}")

    table = out / "ablation.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["name", "mse", "mae", "final_train_loss"])
        writer.writeheader()
        writer.writerows(rows)
    figure = out / "ablation.png"
    report.plot_ablation(rows, figure)
    snapshot = out / "config.snapshot.cfg"
    write_config(base, snapshot)
    write_manifest(out, "ablate", base.seed, inputs={}, outputs=[table, figure, snapshot],
                   extra={"windows": args.windows, "epochs": args.epochs,
                          "variants": [name for name, _ in ABLATION_VARIANTS]})
    return 0


# -- dispatch -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segcast",
                                     description="segment-parallel forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic multi-peak window dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--windows", type=int, default=5000)
    p.add_argument("--context", type=int, default=512)
    p.add_argument("--horizon", type=int, default=96)
    p.add_argument("--modes", type=int, default=2)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a forecaster on a generated dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="directory holding data.csv/labels.csv")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; exports predictions")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="AR-vs-parallel inference cost benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--horizons", default=",".join(str(h) for h in DEFAULT_HORIZONS))
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--parallel-heads", action="store_true")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--seg-len", type=int, default=48)
    p.add_argument("--enc-dim", type=int, default=48)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--config")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=2)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and score the five module ablations")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--windows", type=int, default=512)
    p.add_argument("--epochs", type=int, default=2)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error (usage/config): {exc}", file=sys.stderr)
        return USAGE_ERROR
    except NumericError as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
