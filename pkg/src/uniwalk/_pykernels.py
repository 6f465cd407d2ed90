"""Pure-Python reference kernels.

Same signatures and semantics as the compiled ``_kernels`` extension. Used
when the extension is not built, or when ``UNIWALK_BACKEND=python``.
"""

import math

import numpy as np

from ._rng import SplitMix64, walk_seed

NAME = "python"

_POSITIVE, _NEGATIVE, _UNWEIGHTED = 1, 2, 3


class PairCounter:
    """Counts canonical (low, high) entity pairs keyed as ``low << 32 | high``."""

    def __init__(self):
        self._counts = {}

    def add(self, a: int, b: int, count: int = 1) -> None:
        if a > b:
            a, b = b, a
        key = (a << 32) | b
        self._counts[key] = self._counts.get(key, 0) + count

    def add_keys(self, keys, counts) -> None:
        d = self._counts
        for k, c in zip(np.asarray(keys, dtype=np.uint64).tolist(), np.asarray(counts).tolist()):
            d[k] = d.get(k, 0) + c

    def items(self):
        if not self._counts:
            return np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.int64)
        keys = np.fromiter(self._counts.keys(), dtype=np.uint64, count=len(self._counts))
        counts = np.fromiter(self._counts.values(), dtype=np.int64, count=len(self._counts))
        order = np.argsort(keys, kind="stable")
        return keys[order], counts[order]

    def clear(self) -> None:
        self._counts.clear()

    def copy(self) -> "PairCounter":
        out = PairCounter()
        out._counts = dict(self._counts)
        return out

    def __len__(self) -> int:
        return len(self._counts)


def draw_neighbor(indptr, indices, cum, node: int, u: float) -> int:
    lo = int(indptr[node])
    end = int(indptr[node + 1])
    hi = end
    r = u * cum[end - 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] <= r:
            lo = mid + 1
        else:
            hi = mid
    if lo >= end:
        lo = end - 1
    return int(indices[lo])


def sample_walks(indptr, indices, cum, starts, reps, length, seed, kind_tag, iteration):
    starts = np.asarray(starts, dtype=np.int64)
    reps = np.asarray(reps, dtype=np.int64)
    out = np.empty((starts.shape[0], length), dtype=np.int64)
    for w in range(starts.shape[0]):
        node = int(starts[w])
        rng = SplitMix64(walk_seed(seed, kind_tag, iteration, node, int(reps[w])))
        out[w, 0] = node
        for t in range(1, length):
            node = draw_neighbor(indptr, indices, cum, node, rng.random())
            out[w, t] = node
    return out


def lookup_rating(score_indptr, score_indices, score_values, user: int, item: int):
    lo = int(score_indptr[user])
    hi = int(score_indptr[user + 1])
    while lo < hi:
        mid = (lo + hi) >> 1
        v = score_indices[mid]
        if v < item:
            lo = mid + 1
        elif v > item:
            hi = mid
        else:
            return float(score_values[mid])
    return None


def _clip(g, limit):
    if limit > 0.0:
        n = math.sqrt(float(g @ g))
        if n > limit:
            g = g * (limit / n)
    return g


def _clip_scalar(g, limit):
    if limit > 0.0 and abs(g) > limit:
        return math.copysign(limit, g)
    return g


def train_walks(walks, kind_tag, window, score_indptr, score_indices, score_values, node_kind,
                mu, bias, latent, vel_b, vel_z, alpha, beta, lambda_b, lambda_z, eta, gamma,
                grad_clip, counter, pair_offset):
    """Extract classified pairs from ``walks`` and apply one momentum update per pair.

    Returns ``(n_r, sse, n_plus, n_minus, n_pairs, bad_index)``; ``bad_index``
    is the global pair ordinal of the first non-finite update, or -1.
    """
    n_r = n_plus = n_minus = n_pairs = 0
    sse = 0.0
    walks = np.asarray(walks)
    length = walks.shape[1]
    for w in range(walks.shape[0]):
        seq = walks[w].tolist()
        for t in range(length):
            a = seq[t]
            lo = max(0, t - window)
            hi = min(length, t + window + 1)
            for j in range(lo, hi):
                if j == t:
                    continue
                b = seq[j]
                if a == b:
                    continue
                idx = pair_offset + n_pairs
                n_pairs += 1
                ka = node_kind[a]
                kb = node_kind[b]
                rating = None
                if ka != kb:
                    if ka == 0:
                        u, i = a, b
                    else:
                        u, i = b, a
                    rating = lookup_rating(score_indptr, score_indices, score_values, u, i)
                if rating is not None:
                    zu = latent[u].copy()
                    zi = latent[i].copy()
                    e = mu + bias[u] + bias[i] + float(zu @ zi) - rating
                    sse += e * e
                    n_r += 1
                    g_bu = _clip_scalar(e + lambda_b * bias[u], grad_clip)
                    g_bi = _clip_scalar(e + lambda_b * bias[i], grad_clip)
                    g_zu = _clip(e * zi + lambda_z * zu, grad_clip)
                    g_zi = _clip(e * zu + lambda_z * zi, grad_clip)
                    vel_b[u] = gamma * vel_b[u] - eta * g_bu
                    bias[u] += vel_b[u]
                    vel_b[i] = gamma * vel_b[i] - eta * g_bi
                    bias[i] += vel_b[i]
                    vel_z[u] = gamma * vel_z[u] - eta * g_zu
                    latent[u] += vel_z[u]
                    vel_z[i] = gamma * vel_z[i] - eta * g_zi
                    latent[i] += vel_z[i]
                    if not (math.isfinite(bias[u]) and math.isfinite(bias[i])
                            and np.isfinite(latent[u]).all() and np.isfinite(latent[i]).all()):
                        return n_r, sse, n_plus, n_minus, n_pairs, idx
                    continue
                if kind_tag == _UNWEIGHTED:
                    continue
                if kind_tag == _NEGATIVE and ka != kb:
                    sign = beta
                    n_minus += 1
                else:
                    sign = -alpha
                    n_plus += 1
                    if counter is not None:
                        counter.add(a, b)
                zv = latent[a].copy()
                zw = latent[b].copy()
                g_zv = _clip(sign * zw + lambda_z * zv, grad_clip)
                g_zw = _clip(sign * zv + lambda_z * zw, grad_clip)
                vel_z[a] = gamma * vel_z[a] - eta * g_zv
                latent[a] += vel_z[a]
                vel_z[b] = gamma * vel_z[b] - eta * g_zw
                latent[b] += vel_z[b]
                if not (np.isfinite(latent[a]).all() and np.isfinite(latent[b]).all()):
                    return n_r, sse, n_plus, n_minus, n_pairs, idx
    return n_r, sse, n_plus, n_minus, n_pairs, -1


def mf_epoch(users, items, values, order, mu, bu, bi, X, Y, lam, eta):
    """One SGD pass over ratings in ``order``; regularizer is lam*(b^2+|x|^2) per rating.

    Returns ``(sse, bad_index)``.
    """
    sse = 0.0
    for k in order.tolist():
        u = int(users[k])
        i = int(items[k])
        xu = X[u].copy()
        yi = Y[i].copy()
        e = values[k] - (mu + bu[u] + bi[i] + float(xu @ yi))
        sse += e * e
        bu[u] += eta * (e - 2.0 * lam * bu[u])
        bi[i] += eta * (e - 2.0 * lam * bi[i])
        X[u] += eta * (e * yi - 2.0 * lam * xu)
        Y[i] += eta * (e * xu - 2.0 * lam * yi)
        if not (math.isfinite(bu[u]) and math.isfinite(bi[i])
                and np.isfinite(X[u]).all() and np.isfinite(Y[i]).all()):
            return sse, int(k)
    return sse, -1
