"""Comparison methods: biased matrix factorization and cosine k-NN collaborative filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _backend
from .errors import DivergenceError
from .ingest import RatingRecord, holdout_split


def _encode(values: Sequence[str]) -> dict[str, int]:
    out: dict[str, int] = {}
    for v in values:
        out.setdefault(v, len(out))
    return out


@dataclass
class MFHyperparams:
    dim: int = 25
    lam: float = 0.1
    eta: float = 0.01
    epochs: int = 50
    seed: int = 0
    validation_fraction: float = 0.1
    patience: int = 3
    clamp: bool = True


@dataclass
class MFParams:
    mu: float
    users: dict[str, int]
    items: dict[str, int]
    bu: np.ndarray
    bi: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    min_r: float
    max_r: float
    epochs_run: int = 0


def predict_mf(params: MFParams, user: str, item: str, clamp: bool = False) -> float:
    """``mu + b_u + b_i + x_u . y_i``; unknown entities contribute zero."""
    return float(predict_mf_many(params, [user], [item], clamp)[0])


def predict_mf_many(params: MFParams, users: Sequence[str], items: Sequence[str],
                    clamp: bool = False) -> np.ndarray:
    u = np.array([params.users.get(x, -1) for x in users], dtype=np.int64)
    i = np.array([params.items.get(x, -1) for x in items], dtype=np.int64)
    ku, ki = u >= 0, i >= 0
    uu, ii = np.where(ku, u, 0), np.where(ki, i, 0)
    pred = (params.mu + np.where(ku, params.bu[uu], 0.0) + np.where(ki, params.bi[ii], 0.0)
            + np.einsum("ij,ij->i", params.X[uu], params.Y[ii]) * (ku & ki))
    if clamp:
        pred = np.clip(pred, params.min_r, params.max_r)
    return pred


def train_mf(ratings: Sequence[RatingRecord], hp: MFHyperparams | None = None, backend=None) -> MFParams:
    """Per-rating SGD on the squared error with ``lam * (b_u^2 + b_i^2 + |x_u|^2 + |y_i|^2)``.

    Ratings are visited in a fresh seeded permutation each epoch. A
    ``validation_fraction`` slice is held out for early stopping.
    """
    hp = hp or MFHyperparams()
    backend = backend or _backend.kernels
    if not ratings:
        raise ValueError("no ratings to train on")
    keep, hold = holdout_split(len(ratings), hp.validation_fraction, hp.seed)
    train = [ratings[k] for k in keep]
    valid = [ratings[k] for k in hold]
    users = _encode([r.user for r in train])
    items = _encode([r.item for r in train])
    tu = np.array([users[r.user] for r in train], dtype=np.int64)
    ti = np.array([items[r.item] for r in train], dtype=np.int64)
    tv = np.array([r.value for r in train], dtype=np.float64)
    mu = math.fsum(tv.tolist()) / len(tv)
    rng = np.random.default_rng([hp.seed & 0xFFFFFFFF, 0x3F])
    half = 0.5 / math.sqrt(hp.dim)
    params = MFParams(mu, users, items, np.zeros(len(users)), np.zeros(len(items)),
                      rng.uniform(-half, half, (len(users), hp.dim)),
                      rng.uniform(-half, half, (len(items), hp.dim)), float(tv.min()), float(tv.max()))

    def val_rmse():
        p = predict_mf_many(params, [r.user for r in valid], [r.item for r in valid], hp.clamp)
        return float(np.sqrt(np.mean((p - np.array([r.value for r in valid])) ** 2)))

    best = (val_rmse() if valid else math.inf, None)
    stale = 0
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(len(tv))
        _, bad = backend.mf_epoch(tu, ti, tv, order, mu, params.bu, params.bi, params.X, params.Y,
                                  hp.lam, hp.eta)
        if bad >= 0:
            raise DivergenceError(f"MF diverged at epoch {epoch}, rating {bad}", bad, epoch)
        params.epochs_run = epoch
        if not valid:
            continue
        v = val_rmse()
        if v < best[0]:
            best = (v, (params.bu.copy(), params.bi.copy(), params.X.copy(), params.Y.copy(), epoch))
            stale = 0
        else:
            stale += 1
            if stale >= hp.patience:
                break
    if valid and best[1] is not None:
        params.bu, params.bi, params.X, params.Y, params.epochs_run = best[1]
    return params


class NeighborhoodCF:
    """Cosine k-NN over zero-filled rating vectors.

    ``mode="user"`` averages the ratings of item ``i`` by the ``k`` raters
    most similar to ``u``; ``mode="item"`` averages ``u``'s ratings of the
    ``k`` items most similar to ``i``. Ties break toward the lower internal
    id. With no candidate at all the global mean is returned.
    """

    def __init__(self, ratings: Sequence[RatingRecord], mode: str = "user"):
        if mode not in ("user", "item"):
            raise ValueError(f"mode must be 'user' or 'item', got {mode!r}")
        if not ratings:
            raise ValueError("no ratings")
        self.mode = mode
        self.users = _encode([r.user for r in ratings])
        self.items = _encode([r.item for r in ratings])
        rows = np.array([self.users[r.user] for r in ratings], dtype=np.int64)
        cols = np.array([self.items[r.item] for r in ratings], dtype=np.int64)
        vals = np.array([r.value for r in ratings], dtype=np.float64)
        self.mu = math.fsum(vals.tolist()) / len(vals)
        R = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.users), len(self.items)))
        # M: rows are the entities whose similarity is measured
        self.M = R if mode == "user" else R.T.tocsr()
        # candidate lists: for user mode, raters of each item; for item mode, items of each user
        self.C = R.T.tocsr() if mode == "user" else R
        norms = np.sqrt(np.asarray(self.M.multiply(self.M).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        self.Mn = sp.diags(1.0 / norms) @ self.M
        self.MnT = self.Mn.T.tocsr()
        self._cache: dict[int, np.ndarray] = {}

    def _sim_row(self, e: int) -> np.ndarray:
        row = self._cache.get(e)
        if row is None:
            if len(self._cache) > 4096:
                self._cache.clear()
            row = np.asarray((self.Mn[e] @ self.MnT).todense()).ravel()
            self._cache[e] = row
        return row

    def predict(self, user: str, item: str, k: int) -> float:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        u = self.users.get(user, -1)
        i = self.items.get(item, -1)
        target, anchor = (u, i) if self.mode == "user" else (i, u)
        if anchor < 0:
            return self.mu
        lo, hi = self.C.indptr[anchor], self.C.indptr[anchor + 1]
        cand = self.C.indices[lo:hi]
        vals = self.C.data[lo:hi]
        if target >= 0:
            keep = cand != target
            cand, vals = cand[keep], vals[keep]
        if len(cand) == 0:
            return self.mu
        sims = self._sim_row(target)[cand] if target >= 0 else np.zeros(len(cand))
        order = np.lexsort((cand, -sims))[:k]
        return float(vals[order].mean())

    def predict_many(self, users: Sequence[str], items: Sequence[str], k: int) -> np.ndarray:
        users, items = list(users), list(items)
        keyed = [(self.users.get(u, -1) if self.mode == "user" else self.items.get(i, -1), n)
                 for n, (u, i) in enumerate(zip(users, items))]
        out = np.empty(len(users))
        for _, n in sorted(keyed):
            out[n] = self.predict(users[n], items[n], k)
        return out


def ucf_predict(ratings: Sequence[RatingRecord], user: str, item: str, k: int) -> float:
    return NeighborhoodCF(ratings, "user").predict(user, item, k)


def icf_predict(ratings: Sequence[RatingRecord], user: str, item: str, k: int) -> float:
    return NeighborhoodCF(ratings, "item").predict(user, item, k)
