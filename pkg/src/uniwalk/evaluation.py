"""Error metrics and the k-fold cross-validation driver."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import MFHyperparams, NeighborhoodCF, predict_mf_many, train_mf
from .ingest import Dataset, FoldSplit
from .kinds import EntityKind
from .trainer import FittedModel, Hyperparams, fit, predict_arrays

METHODS = ("uniwalk", "mf", "ucf", "icf", "mean")


def _check(preds, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("empty prediction set")
    return p, t


def rmse(preds, truth) -> float:
    p, t = _check(preds, truth)
    return math.sqrt(float(np.mean((p - t) ** 2)))


def mae(preds, truth) -> float:
    p, t = _check(preds, truth)
    return float(np.mean(np.abs(p - t)))


@dataclass
class EvalMetrics:
    method: str
    fold: int
    rmse: float
    mae: float
    n_predictions: int
    seconds: float = 0.0


@dataclass
class CVResult:
    method: str
    folds: list[EvalMetrics]
    aggregate: EvalMetrics
    predictions: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)
    details: dict = field(default_factory=dict)


@dataclass
class MethodConfig:
    """Per-method settings for :func:`run_cv`."""

    uniwalk: Hyperparams = field(default_factory=Hyperparams)
    mf: MFHyperparams = field(default_factory=MFHyperparams)
    knn_k: int = 50


def fit_uniwalk_fold(data: Dataset, split: FoldSplit, fold: int, hp: Hyperparams) -> FittedModel:
    return fit(data.subset(split.train_indices(fold)), hp)


def _predict_fold(method: str, data: Dataset, split: FoldSplit, fold: int, cfg: MethodConfig):
    train = data.subset(split.train_indices(fold))
    test = [data.ratings[k] for k in split.test_indices(fold)]
    users = [r.user for r in test]
    items = [r.item for r in test]
    extra = {}
    if method == "uniwalk":
        fm = fit(train, cfg.uniwalk)
        u = np.array([fm.index.get(x, EntityKind.USER) for x in users], dtype=np.int64)
        i = np.array([fm.index.get(x, EntityKind.ITEM) for x in items], dtype=np.int64)
        clamp = (fm.stats.min_r, fm.stats.max_r) if cfg.uniwalk.clamp_predictions else None
        pred = predict_arrays(fm.model, u, i, clamp)
        extra = {"trace": fm.trace}
    elif method == "mf":
        params = train_mf(train.ratings, cfg.mf)
        pred = predict_mf_many(params, users, items, clamp=cfg.mf.clamp)
        extra = {"epochs": params.epochs_run}
    elif method in ("ucf", "icf"):
        cf = NeighborhoodCF(train.ratings, "user" if method == "ucf" else "item")
        pred = cf.predict_many(users, items, cfg.knn_k)
    elif method == "mean":
        pred = np.full(len(test), train.stats.mu)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return pred, np.array([r.value for r in test]), extra


def _run_one(args):
    method, data, split, fold, cfg = args
    t0 = time.perf_counter()
    pred, truth, extra = _predict_fold(method, data, split, fold, cfg)
    return fold, pred, truth, extra, time.perf_counter() - t0


def run_cv(method: str, data: Dataset, split: FoldSplit, cfg: MethodConfig | None = None,
           folds: Sequence[int] | None = None, n_jobs: int = 1) -> CVResult:
    """Train on k-1 folds, predict the held-out fold; aggregate pools all predictions."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    cfg = cfg or MethodConfig()
    folds = list(range(split.fold_count)) if folds is None else list(folds)
    jobs = [(method, data, split, f, cfg) for f in folds]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    metrics, preds, truths, details = [], [], [], {}
    for fold, pred, truth, extra, secs in results:
        metrics.append(EvalMetrics(method, fold, rmse(pred, truth), mae(pred, truth), len(truth), secs))
        preds.append(pred)
        truths.append(truth)
        details[fold] = extra
    p, t = np.concatenate(preds), np.concatenate(truths)
    agg = EvalMetrics(method, -1, rmse(p, t), mae(p, t), len(t), sum(m.seconds for m in metrics))
    return CVResult(method, metrics, agg, p, t, details)


def results_table(results: Sequence[CVResult]) -> str:
    """Aligned text table with one pooled row per method."""
    lines = [f"{'method':<10} {'RMSE':>8} {'MAE':>8} {'n':>8} {'seconds':>9}"]
    for r in results:
        a = r.aggregate
        lines.append(f"{r.method:<10} {a.rmse:>8.4f} {a.mae:>8.4f} {a.n_predictions:>8d} {a.seconds:>9.1f}")
    return "\n".join(lines) + "\n"


def results_tsv(results: Sequence[CVResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["method", "fold", "rmse", "mae", "nPredictions", "wall_time"])
    for r in results:
        for m in [*r.folds, r.aggregate]:
            w.writerow([m.method, "all" if m.fold < 0 else m.fold, f"{m.rmse:.6f}", f"{m.mae:.6f}",
                        m.n_predictions, f"{m.seconds:.3f}"])
    return buf.getvalue()
