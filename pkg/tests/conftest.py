"""Shared fixtures: small deterministic models, datasets, and parameter sets."""

import numpy as np
import pytest

from scaa.attention import init_soc_params
from scaa.autodiff import Tensor
from scaa.data import Dataset, InteractionRecord
from scaa.model import new_model


def rng(seed=0):
    return np.random.default_rng(seed)


def make_soc(d, seed=0):
    """Seeded attention params, untracked so outputs stay plain arrays."""
    p = init_soc_params(d, rng(seed))
    for t in p.tensors():
        t.requires_grad = False
    return p


def const_triple(d, q=None, k=None, v=None):
    """ProjectionTriple from explicit matrices; None means identity."""
    from scaa.attention import ProjectionTriple

    eye = np.eye(d)
    return ProjectionTriple(
        Tensor(eye if q is None else np.asarray(q, dtype=float)),
        Tensor(eye if k is None else np.asarray(k, dtype=float)),
        Tensor(eye if v is None else np.asarray(v, dtype=float)),
    )


def const_soc(d, **per_site):
    """SocParams with identity weights except the overrides in `per_site`.

    per_site maps site name (co_like, ...) to a (q, k, v) matrix triple.
    """
    from scaa.attention import SocParams

    sites = {}
    for site in ("co_like", "co_follow", "self_like", "self_follow"):
        q, k, v = per_site.get(site, (None, None, None))
        sites[site] = const_triple(d, q, k, v)
    return SocParams(**sites)


def records_from_rows(rows):
    """rows of (user, item, click, like, follow, ts) ints -> records tuple."""
    return tuple(
        InteractionRecord(u, i, bool(c), bool(lk), bool(f), ts)
        for u, i, c, lk, f, ts in rows
    )


def dataset_from_rows(rows, n_users=None, n_items=None):
    recs = records_from_rows(rows)
    nu = (max((r.user for r in recs), default=-1) + 1) if n_users is None else n_users
    ni = (max((r.item for r in recs), default=-1) + 1) if n_items is None else n_items
    return Dataset(recs, tuple(f"u{k}" for k in range(nu)), tuple(f"i{k}" for k in range(ni)))


@pytest.fixture
def tiny_model():
    """10 items, d=4, hidden=8, full variant, fixed seed."""
    return new_model([f"i{j}" for j in range(10)], d=4, hidden=8, seed_rng=rng(7))


def zero_head(model):
    """Silence the prediction head in place; every logit becomes 0."""
    for t in (model.w1, model.b1, model.w2, model.b2):
        t.value[:] = 0.0
    return model
