"""Rating prediction, top-N recommendation and two-reason explanations.

Similarity between entities is the co-occurrence ratio
``#(v, w) / (#v * #w)`` over the positive pair multiset.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import UnknownEntityError
from .ingest import Dataset, DatasetStats, EntityIndex
from .kinds import EntityKind
from .pairs import CoocCounts
from .trainer import ModelParams, predict_raw

REPORT_SCHEMA_VERSION = 1


def similarity(counts: CoocCounts, v: int, w: int) -> float:
    if v == w:
        raise ValueError("similarity needs two distinct entities")
    pc = counts.pair_count(v, w)
    if pc == 0:
        return 0.0
    return pc / (counts.total(v) * counts.total(w))


def similarity_row(counts: CoocCounts, v: int) -> dict[int, float]:
    """Similarities of ``v`` to every entity it co-occurs with."""
    others, pcs = counts.neighbors(v)
    if len(others) == 0:
        return {}
    sims = pcs / (counts.total(v) * counts.totals[others].astype(np.float64))
    return dict(zip(others.tolist(), sims.tolist()))


def midpoint(stats: DatasetStats) -> float:
    return (stats.min_r + stats.max_r) / 2


# ---------------------------------------------------------------- report types

@dataclass
class RatedItem:
    item: str
    rating: float


@dataclass
class SimilarUser:
    user: str
    sim: float
    isFriend: bool
    theirRatings: list[RatedItem]


@dataclass
class SimilarItem:
    item: str
    sim: float
    targetRating: float


@dataclass
class ItemReason:
    recommendedItem: str
    similarItems: list[SimilarItem]


@dataclass
class SharedRating:
    item: str
    targetRating: float
    otherRating: float


@dataclass
class UserMeta:
    user: str
    commonFriends: list[str] = field(default_factory=list)
    commonFavorites: list[SharedRating] = field(default_factory=list)
    commonDislikes: list[SharedRating] = field(default_factory=list)


@dataclass
class Admirer:
    user: str
    ratingRecommended: float
    ratingSimilar: float


@dataclass
class ItemMeta:
    recommendedItem: str
    similarItem: str
    commonAdmirers: list[Admirer] = field(default_factory=list)


@dataclass
class Recommendation:
    item: str
    predictedRating: float


@dataclass
class ExplanationReport:
    targetUser: str
    recommendedItems: list[Recommendation]
    reasonSimilarUsers: list[SimilarUser]
    reasonSimilarItems: list[ItemReason]
    metaUserExplanations: list[UserMeta]
    metaItemExplanations: list[ItemMeta]
    coldUser: bool = False

    def to_dict(self) -> dict:
        return {"schemaVersion": REPORT_SCHEMA_VERSION, **asdict(self)}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExplanationReport":
        version = d.get("schemaVersion", REPORT_SCHEMA_VERSION)
        if version != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {version}")
        return cls(
            targetUser=d["targetUser"],
            recommendedItems=[Recommendation(**r) for r in d["recommendedItems"]],
            reasonSimilarUsers=[
                SimilarUser(s["user"], s["sim"], s["isFriend"], [RatedItem(**r) for r in s["theirRatings"]])
                for s in d["reasonSimilarUsers"]
            ],
            reasonSimilarItems=[
                ItemReason(r["recommendedItem"], [SimilarItem(**s) for s in r["similarItems"]])
                for r in d["reasonSimilarItems"]
            ],
            metaUserExplanations=[
                UserMeta(m["user"], list(m["commonFriends"]),
                         [SharedRating(**x) for x in m["commonFavorites"]],
                         [SharedRating(**x) for x in m["commonDislikes"]])
                for m in d["metaUserExplanations"]
            ],
            metaItemExplanations=[
                ItemMeta(m["recommendedItem"], m["similarItem"], [Admirer(**a) for a in m["commonAdmirers"]])
                for m in d["metaItemExplanations"]
            ],
            coldUser=d.get("coldUser", False),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExplanationReport":
        return cls.from_dict(json.loads(text))


# ------------------------------------------------------------ meta explanation

def meta_explain_user_pair(data: Dataset, u: str, v: str, high: float, low: float) -> UserMeta:
    """Common friends, items both rated >= ``high``, and items both rated < ``low``."""
    if u == v:
        raise ValueError("meta explanation needs two distinct users")
    friends = sorted(data.friends.get(u, set()) & data.friends.get(v, set()))
    ru, rv = data.by_user.get(u, {}), data.by_user.get(v, {})
    favorites, dislikes = [], []
    for item in sorted(ru.keys() & rv.keys()):
        a, b = ru[item], rv[item]
        if a >= high and b >= high:
            favorites.append(SharedRating(item, a, b))
        elif a < low and b < low:
            dislikes.append(SharedRating(item, a, b))
    return UserMeta(v, friends, favorites, dislikes)


def meta_explain_item_pair(data: Dataset, i: str, j: str, high: float) -> ItemMeta:
    """Users who rated both items at or above ``high``."""
    if i == j:
        raise ValueError("meta explanation needs two distinct items")
    ri, rj = data.by_item.get(i, {}), data.by_item.get(j, {})
    admirers = [Admirer(u, ri[u], rj[u]) for u in sorted(ri.keys() & rj.keys())
                if ri[u] >= high and rj[u] >= high]
    return ItemMeta(i, j, admirers)


# ----------------------------------------------------------------- recommender

class Recommender:
    """Read-only view over a trained model, its co-occurrence counts and training data."""

    def __init__(self, model: ModelParams, index: EntityIndex, stats: DatasetStats, counts: CoocCounts,
                 data: Dataset, high_threshold: float | None = None, low_threshold: float | None = None):
        self.model = model
        self.index = index
        self.stats = stats
        self.counts = counts
        self.data = data
        self.high = midpoint(stats) if high_threshold is None else high_threshold
        self.low = midpoint(stats) if low_threshold is None else low_threshold
        self._items = index.ids_of_kind(EntityKind.ITEM)

    def predict(self, user: str, item: str, clamp: bool = True) -> float:
        u = self.index.get(user, EntityKind.USER)
        i = self.index.get(item, EntityKind.ITEM)
        if u >= 0 and i >= 0:
            value = predict_raw(self.model, u, i)
        else:
            value = self.model.mu + (self.model.bias[u] if u >= 0 else 0.0) + \
                (self.model.bias[i] if i >= 0 else 0.0)
        if clamp:
            value = min(max(value, self.stats.min_r), self.stats.max_r)
        return float(value)

    def recommend_top_n(self, user: str, n: int, clamp: bool = True) -> tuple[list[Recommendation], bool]:
        """Unrated items by raw predicted rating, ties to the lower entity id.

        Returns ``(recommendations, cold_user)``; a cold user is ranked by
        item bias alone.
        """
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        u = self.index.get(user, EntityKind.USER)
        rated = self.data.by_user.get(user, {})
        items = np.array([i for i in self._items.tolist() if self.index.external(i) not in rated],
                         dtype=np.int64)
        if len(items) == 0:
            return [], u < 0
        m = self.model
        if u >= 0:
            raw = m.mu + m.bias[u] + m.bias[items] + m.latent[items] @ m.latent[u]
        else:
            raw = m.mu + m.bias[items]
        order = np.lexsort((items, -raw))[:n]
        out = []
        for k in order.tolist():
            val = float(raw[k])
            if clamp:
                val = min(max(val, self.stats.min_r), self.stats.max_r)
            out.append(Recommendation(self.index.external(int(items[k])), val))
        return out, u < 0

    def explain_similar_users(self, user: str, recommended: Sequence[str], k: int) -> list[SimilarUser]:
        """Top-``k`` users by similarity among those who rated a recommended item."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        u = self.index.get(user, EntityKind.USER)
        if u < 0:
            return []
        sims = similarity_row(self.counts, u)
        candidates: dict[str, list[RatedItem]] = {}
        for item in recommended:
            for v, r in self.data.by_item.get(item, {}).items():
                if v != user:
                    candidates.setdefault(v, []).append(RatedItem(item, r))
        scored = []
        for v, ratings in candidates.items():
            vid = self.index.get(v, EntityKind.USER)
            s = sims.get(vid, 0.0)
            if s > 0:
                scored.append((-s, vid, v, ratings))
        scored.sort()
        friends = self.data.friends.get(user, set())
        return [SimilarUser(v, -ns, v in friends, ratings) for ns, _, v, ratings in scored[:k]]

    def explain_similar_items(self, user: str, recommended: Sequence[str], k: int) -> list[ItemReason]:
        """Per recommended item, the top-``k`` items the user rated, by similarity."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        rated = self.data.by_user.get(user, {})
        out = []
        for item in recommended:
            i = self.index.get(item, EntityKind.ITEM)
            scored = []
            if i >= 0:
                sims = similarity_row(self.counts, i)
                for j_ext, r in rated.items():
                    j = self.index.get(j_ext, EntityKind.ITEM)
                    s = sims.get(j, 0.0) if j != i else 0.0
                    if s > 0:
                        scored.append((-s, j, j_ext, r))
            scored.sort()
            out.append(ItemReason(item, [SimilarItem(j_ext, -ns, r) for ns, _, j_ext, r in scored[:k]]))
        return out

    def build_report(self, user: str, n: int, k: int) -> ExplanationReport:
        recs, cold = self.recommend_top_n(user, n)
        items = [r.item for r in recs]
        sim_users = self.explain_similar_users(user, items, k)
        sim_items = self.explain_similar_items(user, items, k)
        meta_users = [meta_explain_user_pair(self.data, user, s.user, self.high, self.low) for s in sim_users]
        meta_items = [meta_explain_item_pair(self.data, reason.recommendedItem, s.item, self.high)
                      for reason in sim_items for s in reason.similarItems]
        return ExplanationReport(user, recs, sim_users, sim_items, meta_users, meta_items, cold)

    def require_user(self, user: str) -> int:
        u = self.index.get(user, EntityKind.USER)
        if u < 0:
            raise UnknownEntityError(f"unknown user id {user!r}")
        return u
