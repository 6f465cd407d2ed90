"""Compare the compiled and pure-Python kernels on synthetic data.

Times walk sampling and one pass of pair training for each walk kind, checks
that both backends produce identical outputs, and extrapolates the cost of one
training iteration at the default hyperparameters.

    python3 benchmarks/bench_kernels.py --users 400 --items 500 --ratings 8000
"""

import argparse
import time

import numpy as np

from uniwalk import _backend
from uniwalk.graph import build_unified_graph
from uniwalk.ingest import EntityIndex
from uniwalk.kinds import WalkKind
from uniwalk.synthetic import make_social_ratings
from uniwalk.trainer import Hyperparams, init_model
from uniwalk.walker import walk_starts


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(kern, graph, stats, hp, kind, n_walks, repeat):
    table = graph.table(kind)
    starts, reps = walk_starts(graph, hp.walks_per_node)
    pick = np.linspace(0, len(starts) - 1, n_walks).astype(np.int64)
    starts, reps = starts[pick], reps[pick]
    t_walk, walks = _time(lambda: kern.sample_walks(table.indptr, table.indices, table.cum, starts, reps,
                                                    hp.walk_length, hp.seed, int(kind), 1), repeat)
    sp, si, sv = graph.score_csr()

    def train_once():
        m = init_model(graph.n_nodes, hp.dim, stats.mu, hp.seed)
        vb, vz = np.zeros_like(m.bias), np.zeros_like(m.latent)
        counter = kern.PairCounter()
        res = kern.train_walks(walks, int(kind), hp.window, sp, si, sv, graph.node_kind, m.mu, m.bias, m.latent,
                               vb, vz, hp.alpha, hp.beta, hp.lambda_b, hp.lambda_z, hp.eta, hp.gamma,
                               hp.grad_clip, counter, 0)
        return res, m

    t_train, (res, model) = _time(train_once, repeat)
    return t_walk, t_train, walks, res, model


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=300)
    ap.add_argument("--items", type=int, default=400)
    ap.add_argument("--ratings", type=int, default=6000)
    ap.add_argument("--social", type=int, default=250)
    ap.add_argument("--walks", type=int, default=400, help="walks per kind per measurement")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    data = make_social_ratings(args.users, args.items, args.ratings, args.social, seed=args.seed)
    hp = Hyperparams()
    index = EntityIndex.build(data.ratings, data.social)
    stats = data.stats
    graph = build_unified_graph(data.ratings, data.social, hp.c, index, stats.min_r, stats.max_r)
    compiled = _backend.compiled_kernels()
    backends = [("python", _backend.python_kernels)] + ([("cython", compiled)] if compiled else [])
    if compiled is None:
        print("compiled kernels not built; timing the Python fallback only")

    print(f"graph: {graph.n_nodes} nodes, {graph.n_edges} edges; {args.walks} walks of length {hp.walk_length}")
    print(f"{'kind':<11}{'backend':<9}{'walks/s':>12}{'pairs/s':>14}{'identical':>11}")
    per_pair = {}
    for kind in WalkKind:
        ref = None
        for name, kern in backends:
            t_walk, t_train, walks, res, model = bench(kern, graph, stats, hp, kind, args.walks, args.repeat)
            n_pairs = res[4] if kind is not WalkKind.UNWEIGHTED else res[0]
            same = ""
            if ref is None:
                ref = (walks, res, model)
            else:
                same = str(np.array_equal(walks, ref[0]) and res[0] == ref[1][0]
                           and np.allclose(model.latent, ref[2].latent, rtol=0, atol=1e-9))
            per_pair[(kind, name)] = (t_walk / args.walks, t_train / args.walks)
            print(f"{kind.name.lower():<11}{name:<9}{args.walks / t_walk:>12.0f}"
                  f"{max(n_pairs, 1) / t_train:>14.0f}{same:>11}")

    # one iteration = walks_per_node walks of each kind from every node
    n_start = int((graph.degree() > 0).sum())
    for name, _ in backends:
        per_iter = sum(sum(per_pair[(k, name)]) for k in WalkKind) * n_start * hp.walks_per_node
        print(f"{name}: ~{per_iter:.1f} s per training iteration on this graph")
    if len(backends) == 2:
        py = sum(sum(per_pair[(k, "python")]) for k in WalkKind)
        cy = sum(sum(per_pair[(k, "cython")]) for k in WalkKind)
        print(f"speedup cython/python: {py / cy:.1f}x")


if __name__ == "__main__":
    main()
