"""Loss, optimizers, the training loop, and the four-variant ablation runner.

Training batches are per-user: one forward graph shares the user's
interest vector and click context across that user's exposure rows, which
is both the natural unit for the attention encoder and the main speed
lever at this scale. User order is reshuffled each epoch from a dedicated
seed stream; everything else is deterministic, so a (config, seed) pair
pins the trained weights exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .attention import check_variant
from .autodiff import NumericError, ShapeError, Tensor
from .data import Dataset, split_train_test
from .metrics import EvalReport, evaluate_all, format_report_table
from .model import ScaaModel, build_histories, new_model, user_logits
from .seeding import MODEL_INIT, SHUFFLE, rng_stream

__all__ = [
    "TrainConfig",
    "bce_loss",
    "Sgd",
    "Adam",
    "make_optimizer",
    "train",
    "save_loss_curve",
    "AblationResult",
    "ABLATION_ROWS",
    "run_ablation",
    "format_ablation_table",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    variant: str = "full"
    use_soc: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        check_variant(self.variant)


def bce_loss(logits, labels):
    """Mean binary cross-entropy from logits; differentiable 1x1 output.

    Accepts tensors, arrays, or plain sequences; labels are broadcast to
    the (n x 1) column shape the model head emits.
    """
    if not isinstance(logits, (Tensor, np.ndarray)):
        logits = np.asarray(logits, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    return ad.bce_with_logits(logits, y)


class Sgd:
    """Plain gradient descent: p <- p - lr * g."""

    def __init__(self, params: list[Tensor], lr: float):
        self.params = list(params)
        self.lr = float(lr)

    def step(self, grads):
        for p, g in zip(self.params, grads):
            if g.shape != p.value.shape:
                raise ShapeError(f"gradient shape {g.shape} vs param {p.value.shape}")
            p.value -= self.lr * g


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g.shape != p.value.shape:
                raise ShapeError(f"gradient shape {g.shape} vs param {p.value.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1c
            v_hat = self.v[i] / b2c
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: TrainConfig, params: list[Tensor]):
    if cfg.optimizer == "sgd":
        return Sgd(params, cfg.lr)
    return Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


def train(model: ScaaModel, train_split, cfg: TrainConfig) -> list[float]:
    """Fit the model in place; returns the per-epoch mean loss curve.

    Every exposure row is one example (click column as the label; shown
    but unclicked rows are the negatives). A non-finite loss aborts with
    the epoch index.
    """
    records = list(getattr(train_split, "records", train_split))
    if not records:
        raise ValueError("train: empty training split")
    histories = build_histories(records, model.items.item_count)

    by_user: dict[int, list] = {}
    for r in records:
        by_user.setdefault(r.user, []).append(r)
    users = sorted(by_user)
    for u in users:
        by_user[u].sort(key=lambda r: r.timestamp)

    params = model.params()
    opt = make_optimizer(cfg, params)
    rng = rng_stream(cfg.seed, SHUFFLE)
    n_total = len(records)

    curve: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(users))
        total = 0.0
        for ui in order:
            u = users[ui]
            rows = by_user[u]
            h = histories[u]
            for lo in range(0, len(rows), cfg.batch_size):
                chunk = rows[lo : lo + cfg.batch_size]
                logits = user_logits(model, h, [r.item for r in chunk])
                loss = bce_loss(logits, [1.0 if r.click else 0.0 for r in chunk])
                val = float(loss.value[0, 0]) if isinstance(loss, Tensor) else float(loss[0, 0])
                if not math.isfinite(val):
                    raise NumericError(f"epoch {epoch}: non-finite training loss")
                total += val * len(chunk)
                grads = ad.backward(loss, params)
                opt.step(grads)
        curve.append(total / n_total)
    return curve


def save_loss_curve(path, curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "mean_loss"))
        for i, v in enumerate(curve):
            w.writerow((i, repr(float(v))))


# Ablation rows in fixed report order: the no-interest baseline, then the
# variants adding attention stages one at a time.
ABLATION_ROWS = (
    ("base", dict(use_soc=False, variant="none")),
    ("SCAA_cs", dict(use_soc=True, variant="none")),
    ("SCAA_s", dict(use_soc=True, variant="co_only")),
    ("SCAA", dict(use_soc=True, variant="full")),
)


@dataclass(frozen=True)
class AblationResult:
    seed: int
    rows: tuple[tuple[str, EvalReport], ...]
    improvement: float  # relative AUC gain of the full model over base
    loss_curves: tuple[tuple[str, tuple[float, ...]], ...]

    def report(self) -> dict:
        return {
            "seed": self.seed,
            "improvement_full_over_base": self.improvement,
            "rows": {name: asdict(rep) for name, rep in self.rows},
        }


def run_ablation(
    ds: Dataset,
    cfg: TrainConfig,
    d: int = 16,
    hidden: int | None = None,
    split_ratio: float = 0.8,
    k: int = 50,
    item_features: np.ndarray | None = None,
    literal_self: bool = False,
    scale_attention: bool = False,
    threads: int = 1,
) -> AblationResult:
    """Train and evaluate all four variants on one shared split.

    `ds` must already be filtered to qualifying users. Each variant starts
    from identical initial weights (same seed, same draw order) and sees
    the identical shuffle sequence, so the variants differ only through
    the interest path.
    """
    train_ds, test_ds = split_train_test(ds, split_ratio)
    if not test_ds.records:
        raise ValueError("run_ablation: test split is empty")
    eval_histories = build_histories(train_ds.records, ds.n_items)

    rows = []
    curves = []
    for name, flags in ABLATION_ROWS:
        model = new_model(
            ds.item_ids,
            d=d,
            hidden=hidden,
            seed_rng=rng_stream(cfg.seed, MODEL_INIT),
            variant=flags["variant"],
            use_soc=flags["use_soc"],
            literal_self=literal_self,
            scale_attention=scale_attention,
            item_features=item_features,
        )
        curve = train(model, train_ds, replace(cfg, variant=flags["variant"], use_soc=flags["use_soc"]))
        rep = evaluate_all(model, test_ds, eval_histories, k=k, threads=threads)
        rows.append((name, rep))
        curves.append((name, tuple(curve)))

    by_name = dict(rows)
    improvement = by_name["SCAA"].auc / by_name["base"].auc - 1.0
    return AblationResult(
        seed=cfg.seed,
        rows=tuple(rows),
        improvement=improvement,
        loss_curves=tuple(curves),
    )


def format_ablation_table(result: AblationResult, k: int = 50) -> str:
    table = format_report_table(result.rows, k=k)
    pct = 100.0 * result.improvement
    return f"{table}\nrelative AUC improvement, SCAA over base: {pct:+.1f}%"
