# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: walk sampling, fused pair extraction + momentum SGD, MF epochs."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t SEED_SALT = 0x5851F42D4C957F2DULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t walk_seed(uint64_t seed, uint64_t kind_tag, uint64_t iteration,
                               uint64_t node, uint64_t rep) noexcept nogil:
    cdef uint64_t h = mix64(seed ^ SEED_SALT)
    h = mix64((h ^ kind_tag) + GOLDEN)
    h = mix64((h ^ iteration) + GOLDEN)
    h = mix64((h ^ node) + GOLDEN)
    h = mix64((h ^ rep) + GOLDEN)
    return h


cdef inline double next_double(uint64_t* state) noexcept nogil:
    state[0] = state[0] + GOLDEN
    return (mix64(state[0]) >> 11) * INV_2_53


cdef uint64_t EMPTY = 0xFFFFFFFFFFFFFFFFULL


cdef class PairCounter:
    """Counts canonical (low, high) entity pairs keyed as ``low << 32 | high``.

    Open addressing with linear probing; capacity is a power of two kept
    at most half full.
    """

    cdef uint64_t* keys
    cdef int64_t* vals
    cdef Py_ssize_t cap
    cdef Py_ssize_t size

    def __cinit__(self, Py_ssize_t capacity=1024):
        cdef Py_ssize_t c = 16
        while c < capacity:
            c <<= 1
        self._alloc(c)

    def __dealloc__(self):
        free(self.keys)
        free(self.vals)

    cdef void _alloc(self, Py_ssize_t cap) except *:
        cdef Py_ssize_t j
        self.keys = <uint64_t*>malloc(cap * sizeof(uint64_t))
        self.vals = <int64_t*>malloc(cap * sizeof(int64_t))
        if self.keys == NULL or self.vals == NULL:
            raise MemoryError()
        for j in range(cap):
            self.keys[j] = EMPTY
        self.cap = cap
        self.size = 0

    cdef void _grow(self) except *:
        cdef uint64_t* old_k = self.keys
        cdef int64_t* old_v = self.vals
        cdef Py_ssize_t old_cap = self.cap
        cdef Py_ssize_t j
        self._alloc(old_cap * 2)
        for j in range(old_cap):
            if old_k[j] != EMPTY:
                self._add_key(old_k[j], old_v[j])
        free(old_k)
        free(old_v)

    cdef inline void _add_key(self, uint64_t key, int64_t count) except *:
        cdef uint64_t mask = <uint64_t>(self.cap - 1)
        cdef uint64_t j = mix64(key) & mask
        while True:
            if self.keys[j] == key:
                self.vals[j] += count
                return
            if self.keys[j] == EMPTY:
                self.keys[j] = key
                self.vals[j] = count
                self.size += 1
                if 2 * self.size > self.cap:
                    self._grow()
                return
            j = (j + 1) & mask

    cdef inline void incr2(self, int64_t a, int64_t b) except *:
        if a > b:
            a, b = b, a
        self._add_key((<uint64_t>a << 32) | <uint64_t>b, 2)

    def add(self, int64_t a, int64_t b, int64_t count=1):
        if a > b:
            a, b = b, a
        self._add_key((<uint64_t>a << 32) | <uint64_t>b, count)

    def add_keys(self, keys, counts):
        cdef const uint64_t[:] k = np.ascontiguousarray(keys, dtype=np.uint64)
        cdef const int64_t[:] c = np.ascontiguousarray(counts, dtype=np.int64)
        cdef Py_ssize_t n
        for n in range(k.shape[0]):
            self._add_key(k[n], c[n])

    def items(self):
        keys = np.empty(self.size, dtype=np.uint64)
        vals = np.empty(self.size, dtype=np.int64)
        cdef uint64_t[:] kv = keys
        cdef int64_t[:] cv = vals
        cdef Py_ssize_t j, n = 0
        for j in range(self.cap):
            if self.keys[j] != EMPTY:
                kv[n] = self.keys[j]
                cv[n] = self.vals[j]
                n += 1
        order = np.argsort(keys, kind="stable")
        return keys[order], vals[order]

    def clear(self):
        cdef Py_ssize_t j
        for j in range(self.cap):
            self.keys[j] = EMPTY
        self.size = 0

    def copy(self):
        cdef PairCounter out = PairCounter(2 * self.size + 2)
        cdef Py_ssize_t j
        for j in range(self.cap):
            if self.keys[j] != EMPTY:
                out._add_key(self.keys[j], self.vals[j])
        return out

    def __len__(self):
        return self.size


cdef inline int64_t draw(const int64_t[:] indptr, const int64_t[:] indices, const double[:] cum,
                         int64_t node, double u) noexcept nogil:
    cdef int64_t lo = indptr[node]
    cdef int64_t end = indptr[node + 1]
    cdef int64_t hi = end
    cdef int64_t mid
    cdef double r = u * cum[end - 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] <= r:
            lo = mid + 1
        else:
            hi = mid
    if lo >= end:
        lo = end - 1
    return indices[lo]


def sample_walks(indptr, indices, cum, starts, reps, Py_ssize_t length, seed, kind_tag, iteration):
    cdef const int64_t[:] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const int64_t[:] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[:] cw = np.ascontiguousarray(cum, dtype=np.float64)
    cdef const int64_t[:] st = np.ascontiguousarray(starts, dtype=np.int64)
    cdef const int64_t[:] rp = np.ascontiguousarray(reps, dtype=np.int64)
    out = np.empty((st.shape[0], length), dtype=np.int64)
    cdef int64_t[:, :] o = out
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t kt = <uint64_t>int(kind_tag)
    cdef uint64_t it = <uint64_t>int(iteration)
    cdef uint64_t state
    cdef Py_ssize_t w, t
    cdef int64_t node
    with nogil:
        for w in range(st.shape[0]):
            node = st[w]
            state = walk_seed(s, kt, it, <uint64_t>node, <uint64_t>rp[w])
            o[w, 0] = node
            for t in range(1, length):
                node = draw(ip, ix, cw, node, next_double(&state))
                o[w, t] = node
    return out


cdef inline double lookup_rating(const int64_t[:] sp, const int64_t[:] si, const double[:] sv,
                                 int64_t user, int64_t item, bint* found) noexcept nogil:
    cdef int64_t lo = sp[user]
    cdef int64_t hi = sp[user + 1]
    cdef int64_t mid, v
    while lo < hi:
        mid = (lo + hi) >> 1
        v = si[mid]
        if v < item:
            lo = mid + 1
        elif v > item:
            hi = mid
        else:
            found[0] = True
            return sv[mid]
    found[0] = False
    return 0.0


cdef inline double clip_factor(double sq, double limit) noexcept nogil:
    cdef double n
    if limit > 0.0:
        n = sqrt(sq)
        if n > limit:
            return limit / n
    return 1.0


cdef inline double clip_scalar(double g, double limit) noexcept nogil:
    if limit > 0.0 and fabs(g) > limit:
        return limit if g > 0 else -limit
    return g


cdef inline double latent_step(double* za, double* zb, double* va, double* vb, double* ga,
                               double* gb, Py_ssize_t d, double c, double lam, double eta,
                               double gamma, double clip) noexcept nogil:
    """g_a = c*z_b + lam*z_a (and symmetric), clip each block, momentum step.

    Returns the sum of the updated coordinates, used as a cheap finiteness probe.
    """
    cdef Py_ssize_t k
    cdef double sa = 0.0, sb = 0.0, fa, fb, acc = 0.0, x, y
    for k in range(d):
        x = c * zb[k] + lam * za[k]
        y = c * za[k] + lam * zb[k]
        ga[k] = x
        gb[k] = y
        sa += x * x
        sb += y * y
    fa = clip_factor(sa, clip)
    fb = clip_factor(sb, clip)
    for k in range(d):
        va[k] = gamma * va[k] - eta * (ga[k] * fa)
        za[k] += va[k]
        vb[k] = gamma * vb[k] - eta * (gb[k] * fb)
        zb[k] += vb[k]
        acc += za[k] + zb[k]
    return acc


cdef bint all_finite(double* za, double* zb, Py_ssize_t d) noexcept nogil:
    # sums of huge finite values can overflow; confirm element-wise
    cdef Py_ssize_t k
    for k in range(d):
        if not (isfinite(za[k]) and isfinite(zb[k])):
            return False
    return True


def train_walks(walks, int kind_tag, Py_ssize_t window, score_indptr, score_indices, score_values,
                node_kind, double mu, double[::1] bias, double[:, ::1] latent, double[::1] vel_b,
                double[:, ::1] vel_z, double alpha, double beta, double lambda_b, double lambda_z,
                double eta, double gamma, double grad_clip, counter, int64_t pair_offset):
    """Extract classified pairs from ``walks`` and apply one momentum update per pair.

    Returns ``(n_r, sse, n_plus, n_minus, n_pairs, bad_index)``.
    """
    cdef const int64_t[:, ::1] W = np.ascontiguousarray(walks, dtype=np.int64)
    cdef const int64_t[::1] sp = np.ascontiguousarray(score_indptr, dtype=np.int64)
    cdef const int64_t[::1] si = np.ascontiguousarray(score_indices, dtype=np.int64)
    cdef const double[::1] sv = np.ascontiguousarray(score_values, dtype=np.float64)
    cdef const unsigned char[::1] nk = np.ascontiguousarray(node_kind, dtype=np.uint8)
    cdef PairCounter pc = counter if counter is not None else None
    cdef bint count_plus = pc is not None
    cdef Py_ssize_t d = latent.shape[1]
    cdef Py_ssize_t length = W.shape[1]
    cdef Py_ssize_t w, t, j, k, lo, hi
    cdef int64_t a, b, u, i
    cdef int64_t n_r = 0, n_plus = 0, n_minus = 0, n_pairs = 0
    cdef double sse = 0.0, acc, rating, e, dot, c, g_bu, g_bi
    cdef double* zu
    cdef double* zi
    cdef bint found
    cdef double[::1] gu = np.empty(max(d, 1), dtype=np.float64)
    cdef double[::1] gi = np.empty(max(d, 1), dtype=np.float64)
    if d == 0 or latent.shape[0] == 0:
        return 0, 0.0, 0, 0, 0, -1

    for w in range(W.shape[0]):
        for t in range(length):
            a = W[w, t]
            lo = t - window if t > window else 0
            hi = t + window + 1 if t + window + 1 < length else length
            for j in range(lo, hi):
                if j == t:
                    continue
                b = W[w, j]
                if a == b:
                    continue
                n_pairs += 1
                found = False
                if nk[a] != nk[b]:
                    if nk[a] == 0:
                        u = a
                        i = b
                    else:
                        u = b
                        i = a
                    rating = lookup_rating(sp, si, sv, u, i, &found)
                if found:
                    zu = &latent[u, 0]
                    zi = &latent[i, 0]
                    dot = 0.0
                    for k in range(d):
                        dot += zu[k] * zi[k]
                    e = mu + bias[u] + bias[i] + dot - rating
                    sse += e * e
                    n_r += 1
                    g_bu = clip_scalar(e + lambda_b * bias[u], grad_clip)
                    g_bi = clip_scalar(e + lambda_b * bias[i], grad_clip)
                    vel_b[u] = gamma * vel_b[u] - eta * g_bu
                    bias[u] += vel_b[u]
                    vel_b[i] = gamma * vel_b[i] - eta * g_bi
                    bias[i] += vel_b[i]
                    acc = bias[u] + bias[i] + latent_step(zu, zi, &vel_z[u, 0], &vel_z[i, 0], &gu[0],
                                                          &gi[0], d, e, lambda_z, eta, gamma, grad_clip)
                    if not isfinite(acc) and not (isfinite(bias[u]) and isfinite(bias[i])
                                                  and all_finite(zu, zi, d)):
                        return n_r, sse, n_plus, n_minus, n_pairs, pair_offset + n_pairs - 1
                    continue
                if kind_tag == 3:
                    continue
                if kind_tag == 2 and nk[a] != nk[b]:
                    c = beta
                    n_minus += 1
                else:
                    c = -alpha
                    n_plus += 1
                    # the mirrored (b, a) pair is classified identically; count both here
                    if count_plus and j > t:
                        pc.incr2(a, b)
                acc = latent_step(&latent[a, 0], &latent[b, 0], &vel_z[a, 0], &vel_z[b, 0], &gu[0],
                                  &gi[0], d, c, lambda_z, eta, gamma, grad_clip)
                if not isfinite(acc) and not all_finite(&latent[a, 0], &latent[b, 0], d):
                    return n_r, sse, n_plus, n_minus, n_pairs, pair_offset + n_pairs - 1
    return n_r, sse, n_plus, n_minus, n_pairs, -1


def mf_epoch(users, items, values, order, double mu, double[:] bu, double[:] bi,
             double[:, ::1] X, double[:, ::1] Y, double lam, double eta):
    """One SGD pass over ratings in ``order``. Returns ``(sse, bad_index)``."""
    cdef const int64_t[:] us = np.ascontiguousarray(users, dtype=np.int64)
    cdef const int64_t[:] it = np.ascontiguousarray(items, dtype=np.int64)
    cdef const double[:] vs = np.ascontiguousarray(values, dtype=np.float64)
    cdef const int64_t[:] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t n, k
    cdef int64_t r, u, i
    cdef double e, dot, xu, yi, sse = 0.0
    cdef double two_lam = 2.0 * lam
    cdef bint ok
    for n in range(od.shape[0]):
        r = od[n]
        u = us[r]
        i = it[r]
        dot = 0.0
        for k in range(d):
            dot += X[u, k] * Y[i, k]
        e = vs[r] - (mu + bu[u] + bi[i] + dot)
        sse += e * e
        bu[u] += eta * (e - two_lam * bu[u])
        bi[i] += eta * (e - two_lam * bi[i])
        ok = isfinite(bu[u]) and isfinite(bi[i])
        for k in range(d):
            xu = X[u, k]
            yi = Y[i, k]
            X[u, k] = xu + eta * (e * yi - two_lam * xu)
            Y[i, k] = yi + eta * (e * xu - two_lam * yi)
            if not (isfinite(X[u, k]) and isfinite(Y[i, k])):
                ok = False
        if not ok:
            return sse, r
    return sse, -1
