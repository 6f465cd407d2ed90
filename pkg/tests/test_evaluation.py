import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_knn
from uniwalk.baselines import MFHyperparams, NeighborhoodCF, icf_predict, predict_mf, train_mf, ucf_predict
from uniwalk.evaluation import (MethodConfig, mae, results_table, results_tsv, rmse, run_cv)
from uniwalk.ingest import RatingRecord, kfold_split
from uniwalk.trainer import Hyperparams


def test_metric_examples():
    assert rmse([1, 2], [1, 2]) == mae([1, 2], [1, 2]) == 0.0
    assert rmse([3, 4], [4, 4]) == pytest.approx(math.sqrt(0.5)) and mae([3, 4], [4, 4]) == 0.5
    assert rmse([5], [3]) == mae([5], [3]) == 2.0
    with pytest.raises(ValueError):
        rmse([1], [1, 2])
    with pytest.raises(ValueError):
        mae([], [])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=50))
def test_rmse_at_least_mae(pairs):
    p, t = zip(*pairs)
    assert rmse(p, t) >= mae(p, t) - 1e-12 >= -1e-12


def test_mf_single_rating_fit():
    params = train_mf([RatingRecord("u", "i", 4.0)], MFHyperparams(epochs=200, validation_fraction=0.0))
    assert abs(predict_mf(params, "u", "i") - 4.0) < 0.01


def test_mf_heavy_regularization_goes_to_mean(small_synth):
    params = train_mf(small_synth.ratings, MFHyperparams(lam=20.0, eta=0.01, epochs=10, validation_fraction=0.0))
    assert np.abs(params.X).max() < 1e-3 and np.abs(params.Y).max() < 1e-3
    r = small_synth.ratings[0]
    assert predict_mf(params, r.user, r.item) == pytest.approx(params.mu, abs=1e-2)


def test_mf_cold_and_determinism(small_synth):
    hp = MFHyperparams(epochs=5, dim=4)
    a = train_mf(small_synth.ratings, hp)
    b = train_mf(small_synth.ratings, hp)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.bi, b.bi)
    assert predict_mf(a, "ghost", "nothing") == a.mu


def test_mf_learns(small_synth):
    split = kfold_split(small_synth.ratings, 5, 0)
    cfg = MethodConfig(mf=MFHyperparams(epochs=30))
    mf = run_cv("mf", small_synth, split, cfg, folds=[0])
    mean = run_cv("mean", small_synth, split, cfg, folds=[0])
    assert mf.aggregate.rmse < mean.aggregate.rmse


def test_knn_examples():
    rows = [RatingRecord("u", "a", 5.0), RatingRecord("u", "b", 1.0), RatingRecord("v", "a", 5.0),
            RatingRecord("v", "b", 1.0), RatingRecord("v", "i", 4.0), RatingRecord("w", "a", 1.0),
            RatingRecord("w", "i", 2.0)]
    assert ucf_predict(rows, "u", "i", 1) == 4.0
    mu = sum(r.value for r in rows) / len(rows)
    assert ucf_predict(rows, "u", "unrated", 3) == mu
    assert icf_predict(rows, "ghost", "i", 3) == mu
    with pytest.raises(ValueError):
        ucf_predict(rows, "u", "i", 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(1, 6))
def test_knn_matches_oracle(seed, k):
    rng = np.random.default_rng(seed)
    rows = {}
    for _ in range(60):
        rows[(f"u{rng.integers(8)}", f"i{rng.integers(8)}")] = float(rng.integers(1, 9)) / 2 + rng.uniform(0, 0.01)
    ratings = [RatingRecord(u, i, v) for (u, i), v in rows.items()]
    triples = [(r.user, r.item, r.value) for r in ratings]
    for mode in ("user", "item"):
        cf = NeighborhoodCF(ratings, mode)
        for u in [f"u{x}" for x in range(9)]:
            for i in [f"i{x}" for x in range(9)]:
                assert cf.predict(u, i, k) == pytest.approx(brute_knn(triples, u, i, k, mode), abs=1e-12)


def test_knn_deterministic(small_synth):
    cf = NeighborhoodCF(small_synth.ratings, "item")
    users = [r.user for r in small_synth.ratings[:50]]
    items = [r.item for r in small_synth.ratings[50:100]]
    assert np.array_equal(cf.predict_many(users, items, 10), NeighborhoodCF(small_synth.ratings, "item").predict_many(users, items, 10))


def test_mean_predictor_oracle(small_synth):
    split = kfold_split(small_synth.ratings, 4, 1)
    res = run_cv("mean", small_synth, split)
    sq = []
    for f in range(4):
        train = [small_synth.ratings[k].value for k in split.train_indices(f)]
        mu = math.fsum(train) / len(train)
        sq += [(small_synth.ratings[k].value - mu) ** 2 for k in split.test_indices(f)]
    assert res.aggregate.rmse == pytest.approx(math.sqrt(sum(sq) / len(sq)), abs=1e-12)
    assert [m.n_predictions for m in res.folds] == split.sizes()


def test_run_cv_fold_order_and_errors(small_synth):
    split = kfold_split(small_synth.ratings, 3, 0)
    a = run_cv("ucf", small_synth, split, folds=[0, 1, 2])
    b = run_cv("ucf", small_synth, split, folds=[2, 0, 1])
    assert a.aggregate.rmse == b.aggregate.rmse and a.aggregate.mae == b.aggregate.mae
    with pytest.raises(ValueError):
        run_cv("bogus", small_synth, split)


def test_run_cv_uniwalk_parallel_matches_serial(small_synth):
    split = kfold_split(small_synth.ratings, 3, 0)
    cfg = MethodConfig(uniwalk=Hyperparams(iterations=2, walks_per_node=1, dim=4))
    serial = run_cv("uniwalk", small_synth, split, cfg, folds=[0, 1])
    par = run_cv("uniwalk", small_synth, split, cfg, folds=[0, 1], n_jobs=2)
    assert np.array_equal(serial.predictions, par.predictions)


def test_leakage_probe_mf(small_synth):
    split = kfold_split(small_synth.ratings, 5, 0)
    train_idx = split.train_indices(0)
    base = train_mf([small_synth.ratings[k] for k in train_idx], MFHyperparams(epochs=3))
    # changing a test rating cannot reach the training slice
    k = int(split.test_indices(0)[0])
    ratings = list(small_synth.ratings)
    ratings[k] = RatingRecord(ratings[k].user, ratings[k].item, ratings[k].value + 1.0)
    again = train_mf([ratings[j] for j in train_idx], MFHyperparams(epochs=3))
    assert np.array_equal(base.X, again.X) and np.array_equal(base.bu, again.bu)


def test_results_outputs(small_synth):
    split = kfold_split(small_synth.ratings, 2, 0)
    res = [run_cv("mean", small_synth, split), run_cv("icf", small_synth, split)]
    table = results_table(res).splitlines()
    assert table[0].split()[:3] == ["method", "RMSE", "MAE"]
    assert [line.split()[0] for line in table[1:]] == ["mean", "icf"]
    tsv = results_tsv(res).splitlines()
    assert tsv[0].split("\t") == ["method", "fold", "rmse", "mae", "nPredictions", "wall_time"]
    assert len(tsv) == 1 + 2 * 3
    assert tsv[3].split("\t")[1] == "all"
