"""Click-prediction model around the two-stage attention interest encoder.

Per user, embeddings of liked and followed items feed `soc_forward` to
produce an interest vector v; the mean embedding of clicked items gives a
click-context vector. For a candidate item the model concatenates
[v, click_context, candidate_embedding] and applies a small perceptron
(3d -> h, tanh, h -> 1) to yield a click logit.

The interest path is removable (`use_soc=False`) so the plain head doubles
as the baseline in ablation runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import SocParams, check_variant, init_soc_params, soc_forward
from .autodiff import ShapeError, Tensor

__all__ = [
    "ItemTable",
    "UserHistory",
    "ScaaModel",
    "new_model",
    "build_level_features",
    "build_histories",
    "user_logits",
    "score",
    "predict_batch",
]


@dataclass
class ItemTable:
    """Trainable per-item embeddings plus the external-id mapping."""

    embeddings: Tensor
    ids: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.embeddings.shape[0] != len(self.ids):
            raise ShapeError(
                f"{len(self.ids)} item ids but {self.embeddings.shape[0]} embedding rows"
            )
        self.index = {s: i for i, s in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise ValueError("item ids must be unique")

    @property
    def item_count(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]


def item_table_from_features(ids, feats: np.ndarray) -> ItemTable:
    """Seed the table with externally supplied per-item feature rows."""
    feats = np.asarray(feats, dtype=np.float64)
    return ItemTable(Tensor(feats.copy(), requires_grad=True), tuple(ids))


@dataclass(frozen=True)
class UserHistory:
    """Deduplicated, chronologically ordered item ids per interaction level."""

    clicked: tuple[int, ...] = ()
    liked: tuple[int, ...] = ()
    followed: tuple[int, ...] = ()


@dataclass
class ScaaModel:
    items: ItemTable
    soc: SocParams
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    variant: str = "full"
    use_soc: bool = True
    literal_self: bool = False
    scale_attention: bool = False

    def __post_init__(self):
        check_variant(self.variant)
        d = self.items.d
        if self.soc.d != d:
            raise ShapeError(f"item embeddings d={d} but attention params d={self.soc.d}")
        h = self.w1.shape[1]
        want = {
            "w1": (3 * d, h),
            "b1": (1, h),
            "w2": (h, 1),
            "b2": (1, 1),
        }
        for name, shape in want.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"head weight {name} must be {shape}, got {got}")

    @property
    def d(self) -> int:
        return self.items.d

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def named_params(self) -> list[tuple[str, Tensor]]:
        """All trainable matrices in the fixed serialization order."""
        out = [("items.embeddings", self.items.embeddings)]
        out.extend(self.soc.named())
        out.extend(
            [
                ("head.w1", self.w1),
                ("head.b1", self.b1),
                ("head.w2", self.w2),
                ("head.b2", self.b2),
            ]
        )
        return out

    def params(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]


def new_model(
    item_ids,
    d: int = 16,
    hidden: int | None = None,
    seed_rng: np.random.Generator | None = None,
    variant: str = "full",
    use_soc: bool = True,
    literal_self: bool = False,
    scale_attention: bool = False,
    item_features: np.ndarray | None = None,
) -> ScaaModel:
    """Fresh model with every weight drawn in a fixed order from `seed_rng`.

    The draw order never depends on variant or use_soc, so runs that differ
    only in those flags start from identical weights. `item_features`
    (item_count x d) replaces the random embedding initialization; the rng
    still advances as if the draw had happened, preserving downstream draws.
    """
    ids = tuple(str(s) for s in item_ids)
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    h = 2 * d if hidden is None else int(hidden)
    if h < 1:
        raise ValueError(f"hidden width must be >= 1, got {h}")
    rng = seed_rng if seed_rng is not None else np.random.default_rng(0)

    emb = rng.uniform(-math.sqrt(3.0 / d), math.sqrt(3.0 / d), (len(ids), d))
    if item_features is not None:
        feats = np.asarray(item_features, dtype=np.float64)
        if feats.shape != (len(ids), d):
            raise ShapeError(
                f"item feature matrix {feats.shape} does not match ({len(ids)}, {d})"
            )
        emb = feats.copy()
    items = ItemTable(Tensor(emb, requires_grad=True), ids)

    soc = init_soc_params(d, rng)

    def glorot(fan_in: int, fan_out: int) -> Tensor:
        b = math.sqrt(6.0 / (fan_in + fan_out))
        return Tensor(rng.uniform(-b, b, (fan_in, fan_out)), requires_grad=True)

    w1 = glorot(3 * d, h)
    b1 = Tensor(np.zeros((1, h)), requires_grad=True)
    w2 = glorot(h, 1)
    b2 = Tensor(np.zeros((1, 1)), requires_grad=True)
    return ScaaModel(
        items, soc, w1, b1, w2, b2,
        variant=variant, use_soc=use_soc,
        literal_self=literal_self, scale_attention=scale_attention,
    )


def _check_ids(ids, item_count: int, what: str):
    for i in ids:
        if not (0 <= i < item_count):
            raise IndexError(f"{what} item id {i} out of range [0, {item_count})")


def build_level_features(h: UserHistory, items: ItemTable):
    """(u_l, u_f, click_context) for one user.

    u_l and u_f stack the embeddings of liked and followed items (possibly
    zero rows); click_context is the mean clicked-item embedding, or the
    zero vector for users with no click history.
    """
    d = items.d
    emb = items.embeddings
    _check_ids(h.liked, items.item_count, "liked")
    _check_ids(h.followed, items.item_count, "followed")
    _check_ids(h.clicked, items.item_count, "clicked")
    u_l = ad.gather_rows(emb, list(h.liked)) if h.liked else np.zeros((0, d))
    u_f = ad.gather_rows(emb, list(h.followed)) if h.followed else np.zeros((0, d))
    if h.clicked:
        ctx = ad.mean_rows(ad.gather_rows(emb, list(h.clicked)))
    else:
        ctx = np.zeros((1, d))
    return u_l, u_f, ctx


def user_logits(model: ScaaModel, h: UserHistory, candidates):
    """Click logits for one user against a list of candidate items.

    The interest vector and click context are computed once and shared by
    all candidates, so this is the unit of batching during training. Returns
    a (len(candidates) x 1) matrix; a graph node when recording is on.
    """
    cand = list(candidates)
    if not cand:
        return np.zeros((0, 1))
    _check_ids(cand, model.items.item_count, "candidate")
    u_l, u_f, ctx = build_level_features(h, model.items)
    if model.use_soc:
        v = soc_forward(
            u_l, u_f, model.soc, model.variant,
            literal_self=model.literal_self,
            scale_attention=model.scale_attention,
        )
    else:
        v = np.zeros((1, model.d))
    b = len(cand)
    x = ad.concat_cols(
        [
            ad.tile_rows(v, b),
            ad.tile_rows(ctx, b),
            ad.gather_rows(model.items.embeddings, cand),
        ]
    )
    hid = ad.tanh(ad.add(ad.matmul(x, model.w1), model.b1))
    return ad.add(ad.matmul(hid, model.w2), model.b2)


def score(model: ScaaModel, h: UserHistory, candidate: int) -> float:
    """Click logit for a single (user, candidate) pair; no graph recorded."""
    with ad.no_grad():
        out = user_logits(model, h, [candidate])
    return float(out[0, 0])


def predict_batch(model: ScaaModel, pairs) -> np.ndarray:
    """Click probabilities for (history, candidate) pairs, order preserved.

    Pairs sharing one history object are evaluated together so the interest
    vector is built once. Errors carry the index of the offending pair.
    """
    pairs = list(pairs)
    out = np.empty(len(pairs))
    for i, (_, cand) in enumerate(pairs):
        try:
            _check_ids([cand], model.items.item_count, "candidate")
        except IndexError as e:
            raise IndexError(f"pair {i}: {e}") from e
    groups: dict[int, list[int]] = {}
    for i, (h, _) in enumerate(pairs):
        groups.setdefault(id(h), []).append(i)
    with ad.no_grad():
        for idxs in groups.values():
            h = pairs[idxs[0]][0]
            try:
                logits = user_logits(model, h, [pairs[i][1] for i in idxs])
            except Exception as e:
                raise type(e)(f"pair {idxs[0]}: {e}") from e
            out[idxs] = ad.sigmoid(logits[:, 0])
    return out


def build_histories(records, item_count: int | None = None) -> dict[int, UserHistory]:
    """Per-user histories from interaction records.

    Records are taken in chronological order (stable on ties); within each
    level an item contributes once, at its first occurrence. Clicked means
    click=1; liked and followed likewise read their own flags.
    """
    by_user: dict[int, list] = {}
    for r in records:
        by_user.setdefault(r.user, []).append(r)
    out: dict[int, UserHistory] = {}
    for user, rows in by_user.items():
        rows.sort(key=lambda r: r.timestamp)
        levels = {"clicked": [], "liked": [], "followed": []}
        seen = {k: set() for k in levels}
        for r in rows:
            for name, flag in (("clicked", r.click), ("liked", r.like), ("followed", r.follow)):
                if flag and r.item not in seen[name]:
                    seen[name].add(r.item)
                    levels[name].append(r.item)
        if item_count is not None:
            for name in levels:
                _check_ids(levels[name], item_count, name)
        out[user] = UserHistory(
            clicked=tuple(levels["clicked"]),
            liked=tuple(levels["liked"]),
            followed=tuple(levels["followed"]),
        )
    return out
