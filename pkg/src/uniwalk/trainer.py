"""Bias + latent-vector learning over walk-sampled pair sets with momentum SGD."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _backend
from .errors import DivergenceError
from .graph import UnifiedGraph, build_unified_graph
from .ingest import Dataset, DatasetStats, EntityIndex, RatingRecord, holdout_split
from .kinds import EntityKind, PairSet, WalkKind
from .pairs import ClassifiedPair, CoocCounts
from .walker import walk_chunks

log = logging.getLogger(__name__)

WALK_ORDER = (WalkKind.POSITIVE, WalkKind.NEGATIVE, WalkKind.UNWEIGHTED)


@dataclass
class Hyperparams:
    c: float = 5.0
    walk_length: int = 30
    window: int = 7
    alpha: float = 0.05
    beta: float = 0.005
    dim: int = 25
    lambda_b: float = 0.1
    lambda_z: float = 0.1
    eta: float = 0.01
    gamma: float = 0.2
    walks_per_node: int = 10
    iterations: int = 10
    seed: int = 0
    grad_clip: float = 5.0
    clamp_predictions: bool = True
    validation_fraction: float = 0.1
    patience: int = 3
    cooc_scope: str = "all"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.c > 0, "c must be > 0"),
            (self.walk_length >= 2, "walk_length must be >= 2"),
            (self.window >= 1, "window must be >= 1"),
            (self.alpha >= 0, "alpha must be >= 0"),
            (self.beta >= 0, "beta must be >= 0"),
            (self.dim >= 1, "dim must be >= 1"),
            (self.lambda_b >= 0, "lambda_b must be >= 0"),
            (self.lambda_z >= 0, "lambda_z must be >= 0"),
            (self.eta > 0, "eta must be > 0"),
            (0 <= self.gamma < 1, "gamma must be in [0, 1)"),
            (self.walks_per_node >= 1, "walks_per_node must be >= 1"),
            (self.iterations >= 1, "iterations must be >= 1"),
            (0 <= self.validation_fraction < 1, "validation_fraction must be in [0, 1)"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.cooc_scope in ("all", "last"), "cooc_scope must be 'all' or 'last'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    def replace(self, **changes) -> "Hyperparams":
        return Hyperparams(**{**asdict(self), **changes})

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class ModelParams:
    mu: float
    bias: np.ndarray
    latent: np.ndarray

    @property
    def dim(self) -> int:
        return self.latent.shape[1]

    @property
    def n_entities(self) -> int:
        return self.latent.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.mu, self.bias.copy(), self.latent.copy())

    def __eq__(self, other) -> bool:
        return (isinstance(other, ModelParams) and self.mu == other.mu
                and np.array_equal(self.bias, other.bias) and np.array_equal(self.latent, other.latent))


@dataclass
class OptimizerState:
    vel_bias: np.ndarray
    vel_latent: np.ndarray

    @classmethod
    def zeros_like(cls, model: ModelParams) -> "OptimizerState":
        return cls(np.zeros_like(model.bias), np.zeros_like(model.latent))


def init_model(n_entities: int, dim: int, mu: float, seed: int) -> ModelParams:
    """Zero biases; latent coordinates uniform in [-0.5/sqrt(dim), 0.5/sqrt(dim)]."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    half = 0.5 / math.sqrt(dim)
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x1A7E])
    latent = rng.uniform(-half, half, size=(n_entities, dim))
    return ModelParams(float(mu), np.zeros(n_entities), np.ascontiguousarray(latent))


def predict_raw(model: ModelParams, u: int, i: int) -> float:
    return model.mu + model.bias[u] + model.bias[i] + float(model.latent[u] @ model.latent[i])


def loss_value(model: ModelParams, pairs: Iterable[ClassifiedPair], hp: Hyperparams) -> float:
    sup = pos = neg = 0.0
    Z = model.latent
    for p in pairs:
        dot = float(Z[p.a] @ Z[p.b])
        if p.set is PairSet.R:
            e = p.rating - (model.mu + model.bias[p.a] + model.bias[p.b] + dot)
            sup += 0.5 * e * e
        elif p.set is PairSet.PLUS:
            pos -= dot
        else:
            neg += dot
    reg = 0.5 * hp.lambda_b * float(model.bias @ model.bias) + 0.5 * hp.lambda_z * float(np.sum(Z * Z))
    return sup + reg + hp.alpha * pos + hp.beta * neg


@dataclass
class SparseGradient:
    bias: dict[int, float] = field(default_factory=dict)
    latent: dict[int, np.ndarray] = field(default_factory=dict)


def _clip_vec(g: np.ndarray, limit: float) -> np.ndarray:
    if limit > 0:
        n = float(np.sqrt(g @ g))
        if n > limit:
            return g * (limit / n)
    return g


def _clip_scalar(g: float, limit: float) -> float:
    if limit > 0 and abs(g) > limit:
        return math.copysign(limit, g)
    return g


def pair_gradient(model: ModelParams, pair: ClassifiedPair, hp: Hyperparams) -> SparseGradient:
    """Per-pair gradient with local regularization, each block clipped to ``hp.grad_clip``."""
    v, w = pair.a, pair.b
    if v == w:
        raise ValueError("pair endpoints must differ")
    zv, zw = model.latent[v], model.latent[w]
    clip = hp.grad_clip
    if pair.set is PairSet.R:
        e = predict_raw(model, v, w) - pair.rating
        return SparseGradient(
            bias={v: _clip_scalar(e + hp.lambda_b * model.bias[v], clip),
                  w: _clip_scalar(e + hp.lambda_b * model.bias[w], clip)},
            latent={v: _clip_vec(e * zw + hp.lambda_z * zv, clip),
                    w: _clip_vec(e * zv + hp.lambda_z * zw, clip)},
        )
    coef = -hp.alpha if pair.set is PairSet.PLUS else hp.beta
    return SparseGradient(latent={v: _clip_vec(coef * zw + hp.lambda_z * zv, clip),
                                  w: _clip_vec(coef * zv + hp.lambda_z * zw, clip)})


def apply_update(model: ModelParams, state: OptimizerState, grad: SparseGradient, eta: float,
                 gamma: float, pair_index: int = -1) -> None:
    """Classical momentum: ``v <- gamma*v - eta*g; theta <- theta + v`` on touched entries."""
    for k, g in grad.bias.items():
        state.vel_bias[k] = gamma * state.vel_bias[k] - eta * g
        model.bias[k] += state.vel_bias[k]
        if not math.isfinite(model.bias[k]):
            raise DivergenceError(f"non-finite bias for entity {k} at pair {pair_index}", pair_index)
    for k, g in grad.latent.items():
        state.vel_latent[k] = gamma * state.vel_latent[k] - eta * g
        model.latent[k] += state.vel_latent[k]
        if not np.isfinite(model.latent[k]).all():
            raise DivergenceError(f"non-finite latent vector for entity {k} at pair {pair_index}",
                                  pair_index)


@dataclass
class IterationRecord:
    iteration: int
    supervised_mse: float
    train_rmse: float
    val_rmse: float | None
    n_r: int
    n_plus: int
    n_minus: int
    seconds: float


@dataclass
class TrainingTrace:
    records: list[IterationRecord] = field(default_factory=list)
    best_iteration: int = 0

    def val_rmse(self, iteration: int) -> float | None:
        for r in self.records:
            if r.iteration == iteration:
                return r.val_rmse
        raise KeyError(iteration)

    def to_tsv(self) -> str:
        head = "iteration\tsupervised_mse\ttrain_rmse\tval_rmse\tn_r\tn_plus\tn_minus\tseconds\n"
        rows = [
            f"{r.iteration}\t{r.supervised_mse:.6f}\t{r.train_rmse:.6f}\t"
            f"{'' if r.val_rmse is None else f'{r.val_rmse:.6f}'}\t{r.n_r}\t{r.n_plus}\t{r.n_minus}\t{r.seconds:.3f}\n"
            for r in self.records
        ]
        return head + "".join(rows)


def _score_arrays(graph: UnifiedGraph):
    sp, si, sv = graph.score_csr()
    users = np.flatnonzero(graph.node_kind == EntityKind.USER)
    counts = sp[users + 1] - sp[users]
    rows = np.repeat(users, counts)
    cols = np.concatenate([si[sp[u]:sp[u + 1]] for u in users]) if len(users) else si[:0]
    vals = np.concatenate([sv[sp[u]:sp[u + 1]] for u in users]) if len(users) else sv[:0]
    return rows, cols, vals


def predict_arrays(model: ModelParams, users: np.ndarray, items: np.ndarray,
                   clamp: tuple[float, float] | None = None) -> np.ndarray:
    """Vectorized prediction; negative ids denote cold entities (zero bias and vector)."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    ku, ki = users >= 0, items >= 0
    uu, ii = np.where(ku, users, 0), np.where(ki, items, 0)
    bu = np.where(ku, model.bias[uu], 0.0)
    bi = np.where(ki, model.bias[ii], 0.0)
    dot = np.einsum("ij,ij->i", model.latent[uu], model.latent[ii]) * (ku & ki)
    pred = model.mu + bu + bi + dot
    if clamp is not None:
        pred = np.clip(pred, clamp[0], clamp[1])
    return pred


def _rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - truth) ** 2))) if len(truth) else float("nan")


def train(graph: UnifiedGraph, index: EntityIndex, stats: DatasetStats, hp: Hyperparams,
          validation: Sequence[RatingRecord] | None = None, backend=None,
          callback: Callable[[IterationRecord], None] | None = None):
    """Run ``hp.iterations`` rounds of positive, negative, then unweighted walks.

    Pairs are consumed in stream order with one momentum update each. With
    a validation list, training stops after ``hp.patience`` non-improving
    iterations and returns the best iteration's parameters and counts.

    Returns ``(ModelParams, CoocCounts, TrainingTrace)``.
    """
    backend = backend or _backend.kernels
    if graph.n_nodes == 0:
        raise ValueError("graph is empty")
    n = graph.n_nodes
    model = init_model(n, hp.dim, stats.mu, hp.seed)
    state = OptimizerState.zeros_like(model)
    sp, si, sv = graph.score_csr()
    node_kind = graph.node_kind
    clamp = (stats.min_r, stats.max_r) if hp.clamp_predictions else None

    tr_u, tr_i, tr_v = _score_arrays(graph)
    if validation:
        va_u = np.array([index.get(r.user, EntityKind.USER) for r in validation], dtype=np.int64)
        va_i = np.array([index.get(r.item, EntityKind.ITEM) for r in validation], dtype=np.int64)
        va_v = np.array([r.value for r in validation], dtype=np.float64)

    def evaluate():
        tr = _rmse(predict_arrays(model, tr_u, tr_i, clamp), tr_v)
        va = _rmse(predict_arrays(model, va_u, va_i, clamp), va_v) if validation else None
        return tr, va

    trace = TrainingTrace()
    tr0, va0 = evaluate()
    trace.records.append(IterationRecord(0, float("nan"), tr0, va0, 0, 0, 0, 0.0))
    counter = backend.PairCounter()
    best = (va0 if va0 is not None else math.inf, 0, model.copy(), counter.copy())
    stale = 0

    for it in range(1, hp.iterations + 1):
        t0 = time.perf_counter()
        if hp.cooc_scope == "last":
            counter.clear()
        n_r = n_plus = n_minus = 0
        sse = 0.0
        offset = 0
        for kind in WALK_ORDER:
            for walks in walk_chunks(graph, kind, hp.walks_per_node, hp.walk_length, hp.seed, it,
                                     backend=backend):
                r, s, p, m, npairs, bad = backend.train_walks(
                    walks, int(kind), hp.window, sp, si, sv, node_kind, model.mu, model.bias,
                    model.latent, state.vel_bias, state.vel_latent, hp.alpha, hp.beta,
                    hp.lambda_b, hp.lambda_z, hp.eta, hp.gamma, hp.grad_clip, counter, offset)
                n_r += r; sse += s; n_plus += p; n_minus += m; offset += npairs
                if bad >= 0:
                    raise DivergenceError(
                        f"non-finite parameter at iteration {it}, {kind.name.lower()} walks, "
                        f"pair {bad}; try a smaller eta or grad_clip", bad, it)
        tr, va = evaluate()
        rec = IterationRecord(it, sse / n_r if n_r else float("nan"), tr, va, n_r, n_plus, n_minus,
                              time.perf_counter() - t0)
        trace.records.append(rec)
        log.info("iteration %d: train_rmse=%.4f val_rmse=%s (%.1fs)", it, tr,
                 "-" if va is None else f"{va:.4f}", rec.seconds)
        if callback is not None:
            callback(rec)
        if va is None:
            best = (math.inf, it, None, None)
            continue
        if va < best[0]:
            best = (va, it, model.copy(), counter.copy())
            stale = 0
        else:
            stale += 1
            if stale >= hp.patience:
                break

    if best[2] is None:
        trace.best_iteration = trace.records[-1].iteration
        return model, CoocCounts.from_counter(counter, n), trace
    trace.best_iteration = best[1]
    return best[2], CoocCounts.from_counter(best[3], n), trace


@dataclass
class FittedModel:
    model: ModelParams
    counts: CoocCounts
    index: EntityIndex
    stats: DatasetStats
    trace: TrainingTrace | None = None


def fit(data: Dataset, hp: Hyperparams, backend=None, callback=None) -> FittedModel:
    """Hold out ``hp.validation_fraction`` of ratings, build the graph from the rest, and train."""
    keep, hold = holdout_split(len(data.ratings), hp.validation_fraction, hp.seed)
    train_ratings = [data.ratings[k] for k in keep]
    validation = [data.ratings[k] for k in hold]
    stats = DatasetStats.from_ratings(train_ratings, data.social)
    index = EntityIndex.build(train_ratings, data.social)
    graph = build_unified_graph(train_ratings, data.social, hp.c, index, stats.min_r, stats.max_r)
    model, counts, trace = train(graph, index, stats, hp, validation or None, backend, callback)
    return FittedModel(model, counts, index, stats, trace)
