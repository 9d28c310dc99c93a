"""Cross-level and within-level attention over a user's interaction history.

Two feature sets enter, one per engagement level: rows of `u_l` embed the
items the user liked, rows of `u_f` the items behind accounts the user
follows. The cross-level (co-attention) stage lets each level borrow
evidence from the other and adds it back as a residual; the within-level
(self-attention) stage then mixes rows inside each enhanced set; weighted
mean pooling fuses both into a single interest vector.

All functions accept plain float64 ndarrays or autodiff `Tensor`s and
return the matching kind, so the same code serves inference and training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    matmul,
    mean_rows,
    row_softmax,
    scale,
    transpose,
)

__all__ = [
    "EmptyLevelError",
    "SOC_VARIANTS",
    "check_variant",
    "ProjectionTriple",
    "SocParams",
    "init_soc_params",
    "project",
    "co_attend",
    "self_attend",
    "pool_interest",
    "soc_forward",
]

# Ablation variants: "full" runs both attention stages, "co_only" stops after
# the cross-level stage, "none" pools the raw features untouched.
SOC_VARIANTS = ("full", "co_only", "none")


class EmptyLevelError(ValueError):
    """An attention stage was asked to run on a level with no rows."""


def check_variant(variant: str) -> str:
    if variant not in SOC_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {SOC_VARIANTS}")
    return variant


@dataclass
class ProjectionTriple:
    """Query/key/value weights for one attention site, each d x d."""

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor

    def __post_init__(self):
        d = self.w_q.shape[0]
        for w in (self.w_q, self.w_k, self.w_v):
            if w.shape != (d, d):
                raise ShapeError(
                    f"projection weights must all be {d}x{d}, got {w.shape}"
                )

    @property
    def d(self) -> int:
        return self.w_q.shape[0]


@dataclass
class SocParams:
    """All twelve weight matrices: a triple per level per attention stage."""

    co_like: ProjectionTriple
    co_follow: ProjectionTriple
    self_like: ProjectionTriple
    self_follow: ProjectionTriple

    def __post_init__(self):
        d = self.co_like.d
        for t in (self.co_follow, self.self_like, self.self_follow):
            if t.d != d:
                raise ShapeError(f"projection triples disagree on d: {t.d} vs {d}")

    @property
    def d(self) -> int:
        return self.co_like.d

    def named(self) -> list[tuple[str, Tensor]]:
        """Weights in a fixed order, named for optimizers and serialization."""
        out = []
        for site in ("co_like", "co_follow", "self_like", "self_follow"):
            t: ProjectionTriple = getattr(self, site)
            for part in ("w_q", "w_k", "w_v"):
                out.append((f"soc.{site}.{part}", getattr(t, part)))
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]


def init_soc_params(d: int, rng: np.random.Generator) -> SocParams:
    """Draw all twelve matrices uniformly from [-sqrt(3/d), +sqrt(3/d)].

    Draw order is fixed (co_like, co_follow, self_like, self_follow; q, k, v
    within each) so a given generator state always yields the same weights.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    bound = math.sqrt(3.0 / d)

    def triple() -> ProjectionTriple:
        return ProjectionTriple(
            *(Tensor(rng.uniform(-bound, bound, (d, d)), requires_grad=True)
              for _ in range(3))
        )

    return SocParams(triple(), triple(), triple(), triple())


def _rows(x) -> int:
    return x.shape[0]


def _cols(x) -> int:
    return x.shape[1]


def project(u, t: ProjectionTriple):
    """Row-wise projections: q = u w_q, v = u w_v, and k = (u w_k)^T.

    The key comes back transposed so q @ k is the c x c logit matrix.
    """
    if _rows(u) == 0:
        raise EmptyLevelError("project: level has no rows")
    if _cols(u) != t.d:
        raise ShapeError(f"project: features are {_cols(u)}-wide but weights are {t.d}x{t.d}")
    q = matmul(u, t.w_q)
    k = transpose(matmul(u, t.w_k))
    v = matmul(u, t.w_v)
    return q, k, v


def _attend(q, k, v, d: int, scale_attention: bool):
    logits = matmul(q, k)
    if scale_attention:
        logits = scale(logits, 1.0 / math.sqrt(d))
    return matmul(row_softmax(logits), v)


def co_attend(u_l, u_f, p: SocParams, scale_attention: bool = False):
    """Cross-level attention with residual add.

    Each liked row queries the followed keys and receives a mixture of
    followed values, added back onto itself; symmetrically for the followed
    rows. Logits are unscaled unless `scale_attention` divides by sqrt(d).
    """
    if _rows(u_l) == 0 or _rows(u_f) == 0:
        raise EmptyLevelError("co_attend: both levels need at least one row")
    q_l, k_l, v_l = project(u_l, p.co_like)
    q_f, k_f, v_f = project(u_f, p.co_follow)
    u_l_e = add(_attend(q_l, k_f, v_f, p.d, scale_attention), u_l)
    u_f_e = add(_attend(q_f, k_l, v_l, p.d, scale_attention), u_f)
    return u_l_e, u_f_e


def self_attend(u_e, t: ProjectionTriple, scale_attention: bool = False):
    """Within-level attention over one feature set; no residual."""
    if _rows(u_e) == 0:
        raise EmptyLevelError("self_attend: level has no rows")
    q, k, v = project(u_e, t)
    return _attend(q, k, v, t.d, scale_attention)


def pool_interest(l_mat, f_mat):
    """Weighted fusion v = (m/(m+n)) mean(l_mat) + (n/(m+n)) mean(f_mat).

    An empty side drops out and the other side gets weight 1. Equals the
    plain row-mean of the two sets stacked together.
    """
    m, n = _rows(l_mat), _rows(f_mat)
    if m + n == 0:
        raise EmptyLevelError("pool_interest: both levels empty")
    if m == 0:
        return mean_rows(f_mat)
    if n == 0:
        return mean_rows(l_mat)
    total = m + n
    return add(scale(mean_rows(l_mat), m / total), scale(mean_rows(f_mat), n / total))


def soc_forward(
    u_l,
    u_f,
    p: SocParams,
    variant: str = "full",
    literal_self: bool = False,
    scale_attention: bool = False,
):
    """Interest vector (1 x d) for one user's liked/followed feature sets.

    variant "full" runs co-attention then self-attention; "co_only" pools the
    co-attended features directly; "none" pools the raw features. When one
    level is empty the cross-level stage is skipped (it has no partner) and
    the rest of the pipeline continues on the nonempty side. Both levels
    empty yields the zero vector.

    `literal_self` switches self-attention to read the RAW features through
    the cross-level projection triples, reproducing the un-superscripted
    equations some write-ups use; the enhanced features then feed nothing.
    """
    check_variant(variant)
    d = p.d
    for name, u in (("u_l", u_l), ("u_f", u_f)):
        if _rows(u) > 0 and _cols(u) != d:
            raise ShapeError(f"soc_forward: {name} is {_cols(u)}-wide, params have d={d}")
    m, n = _rows(u_l), _rows(u_f)
    if m == 0 and n == 0:
        return np.zeros((1, d))

    if variant == "none":
        return pool_interest(u_l, u_f)

    if m > 0 and n > 0:
        e_l, e_f = co_attend(u_l, u_f, p, scale_attention)
    else:
        e_l, e_f = u_l, u_f

    if variant == "co_only":
        return pool_interest(e_l, e_f)

    if literal_self:
        like_out = (
            self_attend(u_l, p.co_like, scale_attention) if m > 0 else u_l
        )
        follow_out = (
            self_attend(u_f, p.co_follow, scale_attention) if n > 0 else u_f
        )
    else:
        like_out = self_attend(e_l, p.self_like, scale_attention) if m > 0 else e_l
        follow_out = self_attend(e_f, p.self_follow, scale_attention) if n > 0 else e_f
    return pool_interest(like_out, follow_out)
