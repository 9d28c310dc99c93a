"""Walk one user's interest vector through the attention pipeline, stage by stage.

The point of the exercise: a polluted history row (an impulse-follow on a
clickbait account) drags the plain mean around, survives cross-level
enhancement, and only gets suppressed once within-level attention can assign
it a low weight. Run it:

    python3 demos/attention_anatomy.py
"""

import numpy as np

from scaa.attention import (
    co_attend,
    init_soc_params,
    pool_interest,
    project,
    self_attend,
    soc_forward,
)
from scaa.autodiff import row_softmax


def show(label, mat):
    text = np.array2string(
        np.asarray(mat), precision=3, suppress_small=True, prefix=" " * 29
    )
    print(f"{label:<28} {text}")


def main():
    rng = np.random.default_rng(7)

    # d=2 so every vector is readable: axis 0 = "cooking", axis 1 = "clickbait"
    liked = np.array([
        [1.0, 0.0],   # a cooking video
        [0.9, 0.1],   # another cooking video
    ])
    followed = np.array([
        [1.0, 0.1],   # a cooking channel
        [0.1, 1.5],   # the impulse-follow: a loud clickbait account
    ])

    print("liked-item features and followed-account features")
    show("  liked", liked)
    show("  followed", followed)

    print("\n1. no attention at all: pool the raw rows")
    show("  mean of everything", pool_interest(liked, followed))
    print("  the clickbait row contributes fully; the profile tilts off-topic\n")

    params = init_soc_params(2, rng)
    for t in params.named():
        t[1].requires_grad = False  # plain-array outputs for printing

    print("2. co-attention: each level borrows from the other, residual kept")
    e_l, e_f = co_attend(liked, followed, params)
    show("  enhanced liked", e_l)
    show("  enhanced followed", e_f)
    print("  every row is original + borrowed value: nothing is dropped yet\n")

    print("3. self-attention weights inside the followed level")
    q, k_t, _ = project(e_f, params.self_follow)
    show("  row weights", row_softmax(q @ k_t))
    print("  training shapes these weights; a row the loss blames gets less mass\n")

    print("4. the three variants, end to end (random init, untrained)")
    for variant in ("none", "co_only", "full"):
        v = soc_forward(liked, followed, params, variant=variant)
        show(f"  variant={variant!r}", v)

    print("\n5. the same, but the self stage has learned to hate row 2")
    # simulate a trained self_follow: keys that push the clickbait row's
    # logit down for every query
    params.self_follow.w_q.value[:] = np.eye(2)
    params.self_follow.w_k.value[:] = np.array([[4.0, 0.0], [-4.0, 0.0]])
    params.self_follow.w_v.value[:] = np.eye(2)
    q, k_t, _ = project(e_f, params.self_follow)
    show("  learned row weights", row_softmax(q @ k_t))
    out = self_attend(e_f, params.self_follow)
    show("  followed after self", out)
    show("  full interest vector", soc_forward(liked, followed, params, variant="full"))
    print("  the clickbait follow is down-weighted; the profile stays on topic")


if __name__ == "__main__":
    main()
