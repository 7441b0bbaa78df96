"""Sweep runner for the channel-mapping and positioning experiments.

A run is fully described by an :class:`ExperimentConfig`; every random draw
descends from its seeds, so two runs of the same config emit identical
reports (runtimes are only written when ``record_runtime`` is set).
"""

from __future__ import annotations

import copy
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import chanscene
from .baselines import elm_train, mlp_train, reduce_dataset
from .chanscene import Scene, generate_dataset
from .simnet import init_from_dataset, predict_batch
from .train import TrainConfig, fine_tune, pos_loss, se_loss, se_upper_bound

log = logging.getLogger(__name__)

REPORT_HEADER = ("L", "k", "stage", "metric_name", "value", "runtime_s", "seed")
STAGE_ORDER = ("init", "fine_tuned", "mlp", "elm", "upper_bound")

DEFAULTS: dict[str, dict[str, Any]] = {
    "channel_mapping": {
        "task": "channel_mapping",
        "seed": 1,
        "L_list": [250, 1000, 4000],
        "k_list": [5],
        "scene": {
            "preset": "indoor_room",
            "size": [10.0, 10.0, 3.0],
            "antenna_grid": [4, 4],
            "antenna_spacing": 0.0625,
            "n_subcarriers": 16,
            "subcarrier_spacing_hz": 1.25e6,
            "carrier_uplink_hz": 2.4e9,
            "carrier_downlink_hz": 2.5e9,
            "max_paths": 5,
            "amplitude_scale": 10.0,
        },
        "data": {"noise_std": 0.01, "subset_size": 4},
        "train": {"learning_rate": 1e-3, "batch_size": 1000, "epochs": 100,
                  "loss_kind": "spectral_efficiency"},
        "eval": {"test_size": 500, "record_runtime": False},
        "baselines": {"mlp": False, "elm": False},
    },
    "positioning": {
        "task": "positioning",
        "seed": 3,
        "L_list": [2048],
        "k_list": [2, 4, 8, 16],
        "scene": {
            "preset": "outdoor_area",
            "size": [400.0, 400.0, 40.0],
            "n_scatterers": 6,
            "array_shape": [4, 4],
            "carrier_hz": 1.27e9,
            "n_subcarriers": 64,
            "subcarrier_spacing_hz": 1.25e6,
            "max_paths": 5,
            "amplitude_scale": 100.0,
        },
        "data": {"noise_std": 0.01},
        "train": {"learning_rate": 1e-3, "batch_size": 100, "epochs": 50,
                  "loss_kind": "positioning"},
        "eval": {"test_size": 441, "record_runtime": False},
        "baselines": {"mlp": True, "elm": True, "mlp_epochs": 200, "mlp_hidden": 112,
                      "elm_hidden": 2000, "elm_ridge": 1e-6},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    L_list: list[int]
    k_list: list[int]
    scene: dict
    data: dict
    train: TrainConfig
    test_size: int
    record_runtime: bool = False
    baselines: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        task = raw.get("task")
        if task not in DEFAULTS:
            raise ValueError(f"config task must be one of {sorted(DEFAULTS)}, got {task!r}")
        d = _merge(DEFAULTS[task], raw)
        L_list = [int(v) for v in d["L_list"]]
        k_list = [int(v) for v in d["k_list"]]
        if not L_list or not k_list:
            raise ValueError("L_list and k_list must be nonempty")
        if min(L_list) < 1:
            raise ValueError("training sizes must be >= 1")
        test_size = int(d["eval"]["test_size"])
        if test_size < 1:
            raise ValueError("eval.test_size must be >= 1")
        train = dict(d["train"])
        train.setdefault("shuffle_seed", int(d["seed"]))
        return cls(
            task=task, seed=int(d["seed"]), L_list=L_list, k_list=k_list,
            scene=d["scene"], data=d["data"], train=TrainConfig(**train),
            test_size=test_size, record_runtime=bool(d["eval"].get("record_runtime", False)),
            baselines=d.get("baselines", {}),
        )

    @classmethod
    def default(cls, task: str, **overrides) -> "ExperimentConfig":
        return cls.from_dict(_merge({"task": task}, overrides))


def build_scene(params: dict, seed: int) -> Scene:
    params = dict(params)
    preset = params.pop("preset", "indoor_room")
    params.setdefault("seed", seed)
    for key in ("size", "antenna_grid", "array_shape", "array_center", "user_height", "coeff_range"):
        if key in params:
            params[key] = tuple(params[key])
    if preset == "indoor_room":
        return chanscene.indoor_room(**params)
    if preset == "outdoor_area":
        return chanscene.outdoor_area(**params)
    raise ValueError(f"unknown scene preset {preset!r}")


@dataclass
class ReportRow:
    L: int
    k: int
    stage: str
    metric_name: str
    value: float
    runtime_s: float
    seed: int


@dataclass
class MetricsReport:
    task: str
    seed: int
    rows: list[ReportRow] = field(default_factory=list)
    record_runtime: bool = False
    failures: list[tuple[int, int, str, str]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def value(self, L: int, k: int, stage: str, metric: str | None = None) -> float:
        for r in self.rows:
            if r.L == L and r.k == k and r.stage == stage and (metric is None or r.metric_name == metric):
                return r.value
        raise KeyError((L, k, stage, metric))

    def sorted_rows(self) -> list[ReportRow]:
        return sorted(self.rows, key=lambda r: (r.L, r.k, STAGE_ORDER.index(r.stage), r.metric_name))


def _eval_positions(pred, targets) -> dict[str, float]:
    err = pos_loss(targets, np.asarray(pred))
    return {"mean_error_m": float(np.mean(err)), "median_error_m": float(np.median(err))}


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    scene = build_scene(cfg.scene, cfg.seed)
    mapping = cfg.task == "channel_mapping"
    noise = float(cfg.data.get("noise_std", 0.0))
    subset = cfg.data.get("subset_size") if mapping else None
    report = MetricsReport(task=cfg.task, seed=cfg.seed, record_runtime=cfg.record_runtime)

    pool = generate_dataset(scene, max(cfg.L_list), cfg.task, noise, subset, stream=0)
    test = generate_dataset(scene, cfg.test_size, cfg.task, noise, subset, stream=1)
    test.split[:] = 1
    if not mapping:
        pool = reduce_dataset(pool)
        test = reduce_dataset(test)
    S = scene.n_subcarriers

    def add(L, k, stage, metrics, runtime):
        for name, val in metrics.items():
            report.rows.append(ReportRow(L, k, stage, name, float(val), runtime, cfg.seed))

    def evaluate(pred) -> dict[str, float]:
        if mapping:
            return {"spectral_efficiency": float(-np.mean(se_loss(test.targets, np.asarray(pred), S)))}
        return _eval_positions(pred, test.targets)

    upper = None
    if mapping:
        upper = {"spectral_efficiency": float(np.mean(se_upper_bound(test.targets, S)))}

    for L in sorted(set(cfg.L_list)):
        ds = pool.take(np.arange(L))
        baseline_rows: dict[str, tuple[dict, float]] = {}
        if not mapping:
            for name in ("mlp", "elm"):
                if not cfg.baselines.get(name, False):
                    continue
                t0 = time.perf_counter()
                try:
                    if name == "mlp":
                        mcfg = cfg.train.with_(epochs=int(cfg.baselines.get("mlp_epochs", 200)))
                        model, _ = mlp_train(ds, mcfg, hidden=int(cfg.baselines.get("mlp_hidden", 112)),
                                             seed=cfg.seed)
                    else:
                        model = elm_train(ds, hidden=int(cfg.baselines.get("elm_hidden", 2000)),
                                          ridge=float(cfg.baselines.get("elm_ridge", 1e-6)), seed=cfg.seed)
                    baseline_rows[name] = (_eval_positions(model.predict(test.inputs), test.targets),
                                           time.perf_counter() - t0)
                except Exception as exc:  # noqa: BLE001 - recorded as a partial cell
                    log.warning("baseline %s failed at L=%d: %s", name, L, exc)
                    baseline_rows[name] = (None, str(exc))
        for k in sorted(set(cfg.k_list)):
            cell = (L, k)
            try:
                t0 = time.perf_counter()
                model = init_from_dataset(ds, k)
                add(L, k, "init", evaluate(predict_batch(model, test.inputs)), time.perf_counter() - t0)
                t0 = time.perf_counter()
                tuned, _ = fine_tune(model, ds, cfg.train, n_subcarriers=S)
                add(L, k, "fine_tuned", evaluate(predict_batch(tuned, test.inputs)), time.perf_counter() - t0)
            except Exception as exc:  # noqa: BLE001
                log.warning("cell L=%d k=%d failed: %s", L, k, exc)
                report.failures.append((*cell, "similarity", str(exc)))
            for name, (metrics, extra) in baseline_rows.items():
                if metrics is None:
                    report.failures.append((*cell, name, extra))
                else:
                    add(L, k, name, metrics, extra)
            if upper is not None:
                add(L, k, "upper_bound", upper, 0.0)
            log.info("finished cell L=%d k=%d", L, k)
    return report


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    return repr(float(v))


def emit_report(report: MetricsReport, path) -> str:
    """Write the report as CSV; ``path`` may be a directory (file named after the task)."""
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, f"{report.task}.csv")
    lines = [",".join(REPORT_HEADER)]
    for r in report.sorted_rows():
        runtime = _fmt(r.runtime_s) if report.record_runtime else "NA"
        lines.append(",".join([str(r.L), str(r.k), r.stage, r.metric_name, _fmt(r.value), runtime, str(r.seed)]))
    for L, k, stage, msg in report.failures:
        lines.append(",".join([str(L), str(k), stage, "failed", "nan", "NA", str(report.seed)]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
