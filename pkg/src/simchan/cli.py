"""Command-line entry point: ``simchan {gen,train,eval,report,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baselines import elm_train, mlp_train, reduce_dataset
from .chanscene import generate_dataset
from .experiment import ExperimentConfig, build_scene, emit_report, run_experiment
from .persist import load_dataset, load_model, model_kind, save_dataset, save_model
from .simnet import SimilarityModel, init_from_dataset, predict_batch
from .train import fine_tune, pos_loss, se_loss, se_upper_bound

log = logging.getLogger("simchan")


def load_config(path: str | None, task: str | None, seed: int | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    if task:
        raw["task"] = task
    if "task" not in raw:
        raise SystemExit("no task given: use --task or set task in the config file")
    if seed is not None:
        raw["seed"] = seed
    return ExperimentConfig.from_dict(raw)


def write_history(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(history):
            fh.write(f"{i},{float(v)!r}\n")


def cmd_gen(args) -> int:
    cfg = load_config(args.config, args.task, args.seed)
    scene = build_scene(cfg.scene, cfg.seed)
    size = args.size if args.size is not None else (
        max(cfg.L_list) if args.split == "train" else cfg.test_size)
    stream = 0 if args.split == "train" else 1
    subset = cfg.data.get("subset_size") if cfg.task == "channel_mapping" else None
    ds = generate_dataset(scene, size, cfg.task, float(cfg.data.get("noise_std", 0.0)), subset, stream=stream)
    if args.split == "test":
        ds.split[:] = 1
    if cfg.task == "positioning" and not args.raw:
        ds = reduce_dataset(ds)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples ({cfg.task}, {args.split}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.task, args.seed)
    ds = load_dataset(args.data)
    if args.model == "simnet":
        model = init_from_dataset(ds, args.k)
        model, history = fine_tune(model, ds, cfg.train, n_subcarriers=ds.n_subcarriers)
    elif args.model == "mlp":
        model, history = mlp_train(ds, cfg.train.with_(epochs=int(cfg.baselines.get("mlp_epochs", 200))),
                                   seed=cfg.seed)
    else:
        model = elm_train(ds, hidden=int(cfg.baselines.get("elm_hidden", 2000)),
                          ridge=float(cfg.baselines.get("elm_ridge", 1e-6)), seed=cfg.seed)
        history = []
    save_model(model, args.out)
    if args.history:
        write_history(history, args.history)
    if history:
        print(f"final epoch mean loss {history[-1]:.6g}")
    print(f"wrote {args.model} model to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data)
    if isinstance(model, SimilarityModel):
        pred = np.array(predict_batch(model, ds.inputs))
    else:
        pred = model.predict(ds.inputs)
    if ds.task == "channel_mapping":
        se = float(-np.mean(se_loss(ds.targets, pred, ds.n_subcarriers)))
        ub = float(np.mean(se_upper_bound(ds.targets, ds.n_subcarriers)))
        print(f"{model_kind(model)} spectral_efficiency {se:.6f} upper_bound {ub:.6f} ratio {se / ub:.4f}")
    else:
        err = pos_loss(ds.targets, pred)
        print(f"{model_kind(model)} mean_error_m {np.mean(err):.4f} median_error_m {np.median(err):.4f}")
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args.config, args.task, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    path = emit_report(report, out)
    status = "partial" if report.partial else "complete"
    print(f"{status} report written to {path} in {time.perf_counter() - t0:.1f}s")
    return 1 if report.partial else 0


def cmd_selftest(args) -> int:
    from .numkernel import finite_diff_grad
    from .simnet import backward, forward

    rng = np.random.default_rng(0)
    results = []

    D = rng.standard_normal((8, 50)) + 1j * rng.standard_normal((8, 50))
    P = rng.standard_normal((3, 50))
    m1 = SimilarityModel(D, P, 1)
    ok = True
    for _ in range(20):
        h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        j = int(np.argmax(np.abs(D.conj().T @ h)))
        ok &= np.array_equal(forward(m1, h).t_hat, P[:, j])
    results.append(("k=1 forward picks the most correlated column", ok))

    m4 = SimilarityModel(D[:6, :12], P[:, :12], 4)
    h = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    g = rng.standard_normal(3)
    gD, gP = backward(m4, forward(m4, h), h, g)
    theta = m4.get_params()

    def f(t):
        mm = m4.copy()
        mm.set_params(t)
        return float(forward(mm, h).t_hat @ g)

    fd = finite_diff_grad(f, theta, 1e-6)
    an = m4.flatten_grads(gD, gP)
    results.append(("backward matches finite differences",
                    np.max(np.abs(fd - an)) <= 1e-5 * max(1.0, np.max(np.abs(an)))))

    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "m.bin"
        save_model(m4, p)
        back = load_model(p, "simnet")
        results.append(("model round trip", np.array_equal(back.D, m4.D) and np.array_equal(back.P, m4.P)))

    for name, passed in results:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}")
    return 0 if all(p for _, p in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simchan", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--task", choices=["channel_mapping", "positioning"])
        p.add_argument("--seed", type=int)

    p = sub.add_parser("gen", help="generate a labeled dataset file")
    common(p)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--size", type=int)
    p.add_argument("--raw", action="store_true", help="positioning: keep full channels, skip reduction")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit a model on a dataset file")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=["simnet", "mlp", "elm"], default="simnet")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--history", help="write per-epoch loss CSV here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="run the full sweep and write the metrics CSV")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="quick numerical self-checks")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
