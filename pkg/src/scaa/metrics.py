"""Ranking metrics for implicit-feedback evaluation: AUC, P@k, R@k, F@k.

AUC uses the Mann-Whitney formulation (ties get half credit), computed
via average ranks with a brute-force pairwise oracle in the tests.
Top-k metrics operate on per-user ranked candidate lists; because a
filtered user can have fewer than k test candidates, precision is
reported against the truncated denominator min(k, list length) with the
strict always-k variant alongside.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .model import ScaaModel, UserHistory, user_logits

__all__ = [
    "UndefinedMetricError",
    "auc",
    "RankedList",
    "rank_candidates",
    "precision_at_k",
    "precision_at_k_strict",
    "recall_at_k",
    "f_at_k",
    "EvalReport",
    "evaluate_all",
    "format_report_table",
]


class UndefinedMetricError(ValueError):
    """The metric has no value on this input (single-class, no relevant, ...)."""


def auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties counted half.

    Equivalent to (#correctly ordered pairs + 0.5 * #tied pairs) / (P * N),
    computed in O(n log n) from average ranks.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError(f"auc: scores {s.shape} and labels {y.shape} must be equal 1-D")
    if not np.isfinite(s).all():
        raise ValueError("auc: scores must be finite")
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("auc needs at least one positive and one negative")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(y.size)
    sv = s[order]
    i = 0
    while i < y.size:
        j = i
        while j + 1 < y.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return float((ranks[y].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


@dataclass(frozen=True)
class RankedList:
    """Candidates sorted by descending probability, item id breaking ties."""

    entries: tuple[tuple[object, float, bool], ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_relevant(self) -> int:
        return sum(1 for _, _, rel in self.entries if rel)


def rank_candidates(items, probs, relevant) -> RankedList:
    items = list(items)
    p = [float(x) for x in probs]
    rel = [bool(x) for x in relevant]
    if not (len(items) == len(p) == len(rel)):
        raise ValueError("rank_candidates: items, probs, relevant lengths differ")
    if any(not np.isfinite(x) for x in p):
        raise ValueError("rank_candidates: probabilities must be finite")
    order = sorted(range(len(items)), key=lambda i: (-p[i], items[i]))
    return RankedList(tuple((items[i], p[i], rel[i]) for i in order))


def _hits(rl: RankedList, k: int) -> int:
    return sum(1 for _, _, rel in rl.entries[:k] if rel)


def _check_k(rl: RankedList, k: int):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(rl) == 0:
        raise UndefinedMetricError("empty ranked list")


def precision_at_k(rl: RankedList, k: int) -> float:
    """Relevant fraction of the top min(k, |list|) entries."""
    _check_k(rl, k)
    kk = min(k, len(rl))
    return _hits(rl, kk) / kk


def precision_at_k_strict(rl: RankedList, k: int) -> float:
    """Precision with denominator always k, even for short lists."""
    _check_k(rl, k)
    return _hits(rl, min(k, len(rl))) / k


def recall_at_k(rl: RankedList, k: int) -> float:
    _check_k(rl, k)
    total = rl.total_relevant
    if total == 0:
        raise UndefinedMetricError("recall undefined without relevant items")
    return _hits(rl, min(k, len(rl))) / total


def f_at_k(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both vanish."""
    if p < 0 or r < 0:
        raise ValueError(f"precision and recall must be >= 0, got {p}, {r}")
    if p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


@dataclass(frozen=True)
class EvalReport:
    """Pooled AUC plus macro-averaged top-k metrics for one model."""

    k: int
    auc: float
    recall: float
    precision: float
    f1: float
    precision_strict: float
    n_scored: int
    n_ranked_users: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def evaluate_all(model: ScaaModel, test, histories, k: int = 50, threads: int = 1) -> EvalReport:
    """Score every test exposure and aggregate.

    `test` is a Dataset or record iterable; `histories` maps user id to the
    UserHistory built from the training split (missing users score with an
    empty history). AUC pools all (probability, clicked) pairs; P/R/F@k are
    macro-averaged over users with at least one clicked test item.
    """
    records = list(getattr(test, "records", test))
    if not records:
        raise UndefinedMetricError("evaluate_all: empty test split")
    by_user: dict[int, list] = {}
    for r in records:
        by_user.setdefault(r.user, []).append(r)
    users = sorted(by_user)

    def score_user(u: int) -> np.ndarray:
        rows = by_user[u]
        h = histories.get(u, UserHistory())
        logits = user_logits(model, h, [r.item for r in rows])
        return ad.sigmoid(logits[:, 0])

    with ad.no_grad():
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                probs_by_user = list(pool.map(score_user, users))
        else:
            probs_by_user = [score_user(u) for u in users]

    all_probs = np.concatenate(probs_by_user)
    all_labels = np.array(
        [r.click for u in users for r in by_user[u]], dtype=bool
    )
    pooled_auc = auc(all_probs, all_labels)

    ps, rs, fs, ps_strict = [], [], [], []
    for u, probs in zip(users, probs_by_user):
        rows = by_user[u]
        rel = [r.click for r in rows]
        if not any(rel):
            continue
        rl = rank_candidates([r.item for r in rows], probs, rel)
        p = precision_at_k(rl, k)
        r = recall_at_k(rl, k)
        ps.append(p)
        rs.append(r)
        fs.append(f_at_k(p, r))
        ps_strict.append(precision_at_k_strict(rl, k))
    if not ps:
        raise UndefinedMetricError("evaluate_all: no user has a relevant test item")

    return EvalReport(
        k=k,
        auc=pooled_auc,
        recall=float(np.mean(rs)),
        precision=float(np.mean(ps)),
        f1=float(np.mean(fs)),
        precision_strict=float(np.mean(ps_strict)),
        n_scored=len(records),
        n_ranked_users=len(ps),
    )


def format_report_table(rows, k: int = 50) -> str:
    """Fixed-width text table over (name, EvalReport) rows, 3 decimals."""
    lines = [f"{'model':<10} {'AUC':>6} {f'R@{k}':>6} {f'P@{k}':>6} {f'F@{k}':>6}"]
    for name, rep in rows:
        lines.append(
            f"{name:<10} {rep.auc:>6.3f} {rep.recall:>6.3f} "
            f"{rep.precision:>6.3f} {rep.f1:>6.3f}"
        )
    return "\n".join(lines)
