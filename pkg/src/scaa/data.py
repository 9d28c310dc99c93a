"""Interaction-log ingestion, filtering, splitting, and synthetic data.

The on-disk format is a headered CSV, one exposure per row:

    user_id,item_id,click,like,follow,timestamp

with the three flags in {0,1} and an integer millisecond timestamp. In
memory, ids are interned to dense integers in order of first appearance;
the id tables travel with the Dataset so splits stay index-compatible.

The synthetic generator plants multi-level structure: each user clicks
according to a broad topic mixture but likes a narrower pair of core
topics and follows an even narrower one, so cross-level attention has
real signal to exploit. Item features are topic vectors plus noise and
are written alongside the log for use as embedding initialization.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import sigmoid
from .seeding import SYNTH_EVENTS, SYNTH_LATENTS, rng_stream

__all__ = [
    "ParseError",
    "InteractionRecord",
    "Dataset",
    "load_interactions",
    "save_interactions",
    "filter_multilevel",
    "split_train_test",
    "SynthConfig",
    "gen_synthetic",
    "oracle_probs",
    "save_item_features",
    "load_item_features",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("user_id", "item_id", "click", "like", "follow", "timestamp")


class ParseError(ValueError):
    """An input file violates the documented schema; message names the line."""


@dataclass(frozen=True)
class InteractionRecord:
    """One exposure: the item was shown; the flags say what the user did."""

    user: int
    item: int
    click: bool
    like: bool
    follow: bool
    timestamp: int


@dataclass(frozen=True)
class Dataset:
    """Interaction records plus the dense-id <-> external-id tables."""

    records: tuple[InteractionRecord, ...]
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return len(self.records)

    def user_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.user_ids)}

    def item_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.item_ids)}


def _intern(rows) -> Dataset:
    """Build a Dataset from (user_id, item_id, click, like, follow, ts) rows,
    assigning dense ids by first appearance."""
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    records = []
    for u, i, c, lk, f, ts in rows:
        ui = users.setdefault(u, len(users))
        ii = items.setdefault(i, len(items))
        records.append(InteractionRecord(ui, ii, c, lk, f, ts))
    return Dataset(tuple(records), tuple(users), tuple(items))


def _parse_flag(s: str, line: int, col: str) -> bool:
    if s == "0":
        return False
    if s == "1":
        return True
    raise ParseError(f"line {line}: column {col} must be 0 or 1, got {s!r}")


def load_interactions(path) -> Dataset:
    """Parse an interaction CSV; any malformed row aborts with its line number."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("line 1: empty file, expected header") from None
        if tuple(header) != CSV_HEADER:
            raise ParseError(
                f"line 1: header must be {','.join(CSV_HEADER)}, got {','.join(header)}"
            )
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ParseError(f"line {line}: expected 6 fields, got {len(row)}")
            u, i, c, lk, f, ts = row
            if not u or not i:
                raise ParseError(f"line {line}: empty user_id or item_id")
            try:
                t = int(ts)
            except ValueError:
                raise ParseError(f"line {line}: timestamp {ts!r} is not an integer") from None
            if t < 0:
                raise ParseError(f"line {line}: timestamp must be >= 0, got {t}")
            rows.append(
                (
                    u,
                    i,
                    _parse_flag(c, line, "click"),
                    _parse_flag(lk, line, "like"),
                    _parse_flag(f, line, "follow"),
                    t,
                )
            )
    return _intern(rows)


def save_interactions(ds: Dataset, path) -> None:
    """Write a Dataset back to the CSV schema, preserving record order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in ds.records:
            w.writerow(
                (
                    ds.user_ids[r.user],
                    ds.item_ids[r.item],
                    int(r.click),
                    int(r.like),
                    int(r.follow),
                    r.timestamp,
                )
            )


def filter_multilevel(ds: Dataset, policy: str = "and") -> Dataset:
    """Keep users showing engagement on both levels (or either, policy="or").

    A user qualifies by having >= 1 like record and (AND policy) or/else
    (OR policy) >= 1 follow record. All records of dropped users go; ids
    are re-interned over the survivors.
    """
    if policy not in ("and", "or"):
        raise ValueError(f"filter policy must be 'and' or 'or', got {policy!r}")
    has_like: set[int] = set()
    has_follow: set[int] = set()
    for r in ds.records:
        if r.like:
            has_like.add(r.user)
        if r.follow:
            has_follow.add(r.user)
    keep = has_like & has_follow if policy == "and" else has_like | has_follow
    rows = [
        (
            ds.user_ids[r.user],
            ds.item_ids[r.item],
            r.click,
            r.like,
            r.follow,
            r.timestamp,
        )
        for r in ds.records
        if r.user in keep
    ]
    if not rows:
        log.warning("filter_multilevel: no users qualify under policy %r", policy)
    return _intern(rows)


def split_train_test(ds: Dataset, ratio: float = 0.8) -> tuple[Dataset, Dataset]:
    """Per-user chronological split; both halves share the parent id tables.

    Each user's earliest ceil(ratio * count) records go to train, the rest
    to test. Ties on timestamp keep input order. A single-record user goes
    entirely to train.
    """
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    by_user: dict[int, list[int]] = {}
    for idx, r in enumerate(ds.records):
        by_user.setdefault(r.user, []).append(idx)
    train_idx: set[int] = set()
    for idxs in by_user.values():
        idxs.sort(key=lambda i: (ds.records[i].timestamp, i))
        cut = math.ceil(ratio * len(idxs))
        train_idx.update(idxs[:cut])
    train = tuple(r for i, r in enumerate(ds.records) if i in train_idx)
    test = tuple(r for i, r in enumerate(ds.records) if i not in train_idx)
    return (
        Dataset(train, ds.user_ids, ds.item_ids),
        Dataset(test, ds.user_ids, ds.item_ids),
    )


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic generator. Defaults are the frozen benchmark."""

    users: int = 500
    items: int = 2000
    d_latent: int = 16
    topics: int = 10
    like_rate: float = 0.35
    follow_rate: float = 0.15
    exposure_per_user: int = 45
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("users", "items", "d_latent", "topics", "exposure_per_user"):
            if getattr(self, name) < 1:
                raise ValueError(f"SynthConfig.{name} must be >= 1")
        for name in ("like_rate", "follow_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"SynthConfig.{name} must be in [0, 1], got {v}")
        if self.noise_sigma < 0:
            raise ValueError("SynthConfig.noise_sigma must be >= 0")
        if self.topics > self.d_latent:
            raise ValueError("SynthConfig.topics cannot exceed d_latent")
        if self.exposure_per_user > self.items:
            raise ValueError("SynthConfig.exposure_per_user cannot exceed items")
        if not (0 <= self.seed < 2**64):
            raise ValueError("SynthConfig.seed must fit in 64 bits")


# Generator shape constants. These are part of the frozen benchmark
# definition; retuning them redefines every published number downstream.
_BROAD_ALPHA = 0.8         # Dirichlet concentration of the broad click mixture
_BROAD_CORE_TILT = 0.6     # how strongly the click mixture leans toward the cores
_CORE_PRIMARY_W = 1.0      # primary vs secondary core topic weight in clicks
_CLICK_W_BROAD = 1.0       # logit weight on broad-mixture alignment
_CLICK_W_CORE = 5.0        # logit weight on core alignment
_CLICK_BIAS = -2.0
_LIKE_BOOST_PRIMARY = 2.0  # like_rate multipliers per item-topic relation
_LIKE_BOOST_SECONDARY = 1.5
_LIKE_BOOST_OFFCORE = 0.3
_LIKE_BOOST_BAIT = 6.0     # flashy bait is liked impulsively, any flavor
_FOLLOW_BOOST_PRIMARY = 5.0
_FOLLOW_BOOST_OFFCORE = 0.5
_FOLLOW_BOOST_BAIT = 4.2   # following the clickbait account itself
_FEAT_SCALE = 1.5          # amplitude of item features (topic vector + noise)
_CLICK_W_BAIT = 2.5        # global clickbait pull, identical for every user
_BAIT_MIMICRY = 0.8        # how strongly a bait item masquerades as a real topic
_BAIT_SHINE = 1.0          # amplitude of the shared bait direction itself
_BAIT_ITEM_SHARE = 0.3     # bait share of the item pool


def _user_name(k: int) -> str:
    return f"u{k}"


def _item_name(k: int) -> str:
    return f"i{k}"


@dataclass(frozen=True)
class _Latents:
    """Everything the generator and the oracle share, one draw per config."""

    topic_vecs: np.ndarray      # topics x d_latent, orthonormal rows
    item_topics: np.ndarray     # item -> topic index
    item_mimic: np.ndarray      # item -> mimicked topic for bait, else -1
    item_feats: np.ndarray      # items x d_latent
    k1: np.ndarray              # primary core topic per user
    k2: np.ndarray              # secondary core topic per user
    user_broad_vec: np.ndarray
    user_core_vec: np.ndarray


def _latents(cfg: SynthConfig) -> _Latents:
    """All latent draws, shared by the generator and the oracle.

    Topic 0 is "bait": hook-driven clicks at a rate independent of the
    viewer's interests, liked impulsively, sometimes even followed, and
    never a core interest. It only exists when the config has at least
    two topics; user cores live on the remaining topics.
    """
    rng = rng_stream(cfg.seed, SYNTH_LATENTS)
    a = rng.standard_normal((cfg.d_latent, cfg.topics))
    q, _ = np.linalg.qr(a)
    topic_vecs = q.T  # topics x d_latent, orthonormal rows

    if _BAIT_ITEM_SHARE is not None and cfg.topics >= 2:
        p = np.full(cfg.topics, (1.0 - _BAIT_ITEM_SHARE) / (cfg.topics - 1))
        p[0] = _BAIT_ITEM_SHARE
        item_topics = rng.choice(cfg.topics, size=cfg.items, p=p)
    else:
        item_topics = rng.integers(0, cfg.topics, cfg.items)
    base = topic_vecs[item_topics].copy()
    item_mimic = np.full(cfg.items, -1, dtype=np.int64)
    if cfg.topics >= 2:
        # Bait items masquerade as a random real topic while sharing one
        # common bait direction that marks them all.
        bait_items = np.flatnonzero(item_topics == 0)
        mimic = 1 + rng.integers(0, cfg.topics - 1, bait_items.size)
        item_mimic[bait_items] = mimic
        base[bait_items] = (
            _BAIT_MIMICRY * topic_vecs[mimic] + _BAIT_SHINE * topic_vecs[0]
        )
    item_feats = _FEAT_SCALE * (
        base
        + (cfg.noise_sigma / math.sqrt(cfg.d_latent))
        * rng.standard_normal((cfg.items, cfg.d_latent))
    )

    if cfg.topics >= 2:
        k1 = 1 + rng.integers(0, cfg.topics - 1, cfg.users)
        if cfg.topics >= 3:
            k2 = 1 + (k1 - 1 + 1 + rng.integers(0, cfg.topics - 2, cfg.users)) % (
                cfg.topics - 1
            )
        else:
            k2 = k1.copy()
    else:
        k1 = np.zeros(cfg.users, dtype=np.int64)
        k2 = k1.copy()

    broad = rng.dirichlet(np.full(cfg.topics, _BROAD_ALPHA), size=cfg.users)
    if cfg.topics >= 2:
        broad[:, 0] = 0.0  # bait is clicked for its hook, not out of interest
    core = np.zeros((cfg.users, cfg.topics))
    core[np.arange(cfg.users), k1] += _CORE_PRIMARY_W
    core[np.arange(cfg.users), k2] += 1.0 - _CORE_PRIMARY_W
    broad = broad + _BROAD_CORE_TILT * core
    broad /= broad.sum(axis=1, keepdims=True)

    user_broad_vec = broad @ topic_vecs
    user_core_vec = core @ topic_vecs
    return _Latents(
        topic_vecs,
        item_topics,
        item_mimic,
        item_feats,
        k1,
        k2,
        user_broad_vec,
        user_core_vec,
    )


def _click_probs(lat: _Latents, item_sel, u: int):
    """True click probabilities for one user over the selected items.

    Interest terms see a bait item stripped of its mimicry component: the
    masquerade fools the logging side (likes and follows), not the click
    decision, which bait wins through its hook alone.
    """
    x = lat.item_feats[item_sel]
    x_int = x.copy()
    mim = lat.item_mimic[item_sel]
    masked = np.flatnonzero(mim >= 0)
    if masked.size:
        x_int[masked] -= (_FEAT_SCALE * _BAIT_MIMICRY) * lat.topic_vecs[mim[masked]]
    z = (
        _CLICK_W_BROAD * (x_int @ lat.user_broad_vec[u])
        + _CLICK_W_CORE * (x_int @ lat.user_core_vec[u])
        + _CLICK_BIAS
    )
    if lat.topic_vecs.shape[0] >= 2:
        z = z + _CLICK_W_BAIT * (x @ lat.topic_vecs[0])
    return sigmoid(z.reshape(1, -1)).ravel()


def gen_synthetic(cfg: SynthConfig) -> tuple[Dataset, np.ndarray]:
    """Deterministic synthetic interaction log plus the item feature matrix.

    Every user gets `exposure_per_user` distinct items with timestamps
    0,1,2,... in exposure order. Likes and follows occur only on clicked
    rows: likes concentrate on the user's core topics and on flashy bait,
    follows mostly on the primary core topic, with a real fraction of
    bait accounts followed on impulse. Row i of the returned feature
    matrix belongs to Dataset.item_ids[i].
    """
    lat = _latents(cfg)
    rng = rng_stream(cfg.seed, SYNTH_EVENTS)
    records = []
    for u in range(cfg.users):
        shown = rng.choice(cfg.items, size=cfg.exposure_per_user, replace=False)
        p_click = _click_probs(lat, shown, u)
        clicks = rng.random(cfg.exposure_per_user) < p_click
        like_u = rng.random(cfg.exposure_per_user)
        follow_u = rng.random(cfg.exposure_per_user)
        t = lat.item_topics[shown]
        mim = lat.item_mimic[shown]
        like_p = np.where(
            t == lat.k1[u],
            _LIKE_BOOST_PRIMARY,
            np.where(
                t == lat.k2[u],
                _LIKE_BOOST_SECONDARY,
                np.where(mim >= 0, _LIKE_BOOST_BAIT, _LIKE_BOOST_OFFCORE),
            ),
        ) * cfg.like_rate
        follow_p = np.where(
            t == lat.k1[u],
            _FOLLOW_BOOST_PRIMARY,
            np.where(mim >= 0, _FOLLOW_BOOST_BAIT, _FOLLOW_BOOST_OFFCORE),
        ) * cfg.follow_rate
        likes = clicks & (like_u < np.minimum(like_p, 1.0))
        follows = clicks & (follow_u < np.minimum(follow_p, 1.0))
        for j in range(cfg.exposure_per_user):
            records.append(
                InteractionRecord(
                    u,
                    int(shown[j]),
                    bool(clicks[j]),
                    bool(likes[j]),
                    bool(follows[j]),
                    j,
                )
            )
    ds = Dataset(
        tuple(records),
        tuple(_user_name(k) for k in range(cfg.users)),
        tuple(_item_name(k) for k in range(cfg.items)),
    )
    return ds, lat.item_feats


def oracle_probs(cfg: SynthConfig, user_ids, item_ids) -> np.ndarray:
    """Click probabilities under the true generative model, by external id.

    This is the ceiling benchmark: it sees the latent user mixtures the
    trained models must infer from behavior.
    """
    lat = _latents(cfg)
    u_idx = {_user_name(k): k for k in range(cfg.users)}
    i_idx = {_item_name(k): k for k in range(cfg.items)}
    out = np.empty(len(list(user_ids)))
    pairs = list(zip(user_ids, item_ids))
    for n, (us, its) in enumerate(pairs):
        u = u_idx[us]
        i = i_idx[its]
        out[n] = _click_probs(lat, np.array([i]), u)[0]
    return out


def save_item_features(path, item_ids, feats: np.ndarray) -> None:
    """Write per-item features as `item_id,f1,...,fd` with full precision."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] != len(tuple(item_ids)):
        raise ValueError(f"feature matrix shape {feats.shape} does not match id count")
    d = feats.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id"] + [f"f{j + 1}" for j in range(d)])
        for s, row in zip(item_ids, feats):
            w.writerow([s] + [repr(float(x)) for x in row])


def load_item_features(path) -> tuple[list[str], np.ndarray]:
    """Read a feature CSV back into (ids, matrix); floats round-trip exactly."""
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("line 1: empty feature file") from None
        if not header or header[0] != "item_id" or len(header) < 2:
            raise ParseError("line 1: feature header must be item_id,f1,...,fd")
        d = len(header) - 1
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ParseError(f"line {line}: expected {d + 1} fields, got {len(row)}")
            ids.append(row[0])
            try:
                rows.append([float(x) for x in row[1:]])
            except ValueError:
                raise ParseError(f"line {line}: non-numeric feature value") from None
    return ids, np.array(rows, dtype=np.float64).reshape(len(ids), d)
