"""Command-line entry point.

Subcommands:

    synth      write a synthetic interaction log + item feature file
    train      fit one model on an interaction log, write a checkpoint
    eval       score a checkpoint on the test split, write a report
    ablate     train and compare all four variants, optionally over seeds
    gradcheck  verify analytic gradients against finite differences

Settings resolve as CLI flag > config file (--config, JSON object) >
built-in default. Exit codes: 0 success, 2 configuration problem, 3 data
problem, 4 numeric problem.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import NumericError, grad_check, gradient_fault, scale
from .checkpoint import CheckpointError, load_model, save_model
from .data import (
    Dataset,
    ParseError,
    SynthConfig,
    filter_multilevel,
    gen_synthetic,
    load_interactions,
    load_item_features,
    save_interactions,
    save_item_features,
    split_train_test,
)
from .metrics import UndefinedMetricError, evaluate_all, format_report_table
from .model import UserHistory, build_histories, new_model, user_logits
from .seeding import GRADCHECK, MODEL_INIT, rng_stream
from .training import (
    TrainConfig,
    bce_loss,
    format_ablation_table,
    run_ablation,
    save_loss_curve,
    train,
)

__all__ = ["main", "RunConfig", "ConfigError"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    """Bad flag value, bad config file, or inconsistent settings."""


@dataclass
class RunConfig:
    """Every setting any subcommand reads, with its documented default."""

    # run plumbing
    seed: int = 0
    out: str = "runs"
    threads: int = 1
    # data
    data: str | None = None
    features: str | None = None
    filter_policy: str = "and"
    split_ratio: float = 0.8
    # model
    d: int = 16
    hidden: int | None = None
    variant: str = "full"
    use_soc: bool = True
    literal_self: bool = False
    scale_attention: bool = False
    # training
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # evaluation
    k: int = 50
    checkpoint: str | None = None
    # ablation
    seeds: int = 1
    # gradcheck
    trials: int = 20
    inject_fault: bool = False
    # synthetic generator, tracking the frozen SynthConfig defaults
    users: int = SynthConfig.users
    items: int = SynthConfig.items
    d_latent: int = SynthConfig.d_latent
    topics: int = SynthConfig.topics
    like_rate: float = SynthConfig.like_rate
    follow_rate: float = SynthConfig.follow_rate
    exposure_per_user: int = SynthConfig.exposure_per_user
    noise_sigma: float = SynthConfig.noise_sigma

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.filter_policy not in ("and", "or"):
            raise ConfigError(f"filter policy must be and/or, got {self.filter_policy!r}")
        if not (0.0 < self.split_ratio < 1.0):
            raise ConfigError(f"split ratio must be in (0, 1), got {self.split_ratio}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.seeds < 1:
            raise ConfigError(f"seeds must be >= 1, got {self.seeds}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            seed=self.seed if seed is None else seed,
            variant=self.variant,
            use_soc=self.use_soc,
        )

    def synth_config(self, seed: int | None = None) -> SynthConfig:
        return SynthConfig(
            users=self.users,
            items=self.items,
            d_latent=self.d_latent,
            topics=self.topics,
            like_rate=self.like_rate,
            follow_rate=self.follow_rate,
            exposure_per_user=self.exposure_per_user,
            noise_sigma=self.noise_sigma,
            seed=self.seed if seed is None else seed,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path}: invalid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path}: top level must be a JSON object")
    unknown = sorted(set(raw) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {unknown}")
    return raw


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, and explicit CLI flags, in that order."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for name in _FIELD_TYPES:
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    try:
        return RunConfig(**merged)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _out_dir(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _variant_row_name(cfg: RunConfig) -> str:
    if not cfg.use_soc:
        return "base"
    return {"none": "SCAA_cs", "co_only": "SCAA_s", "full": "SCAA"}[cfg.variant]


def _load_filtered(cfg: RunConfig) -> Dataset:
    if not cfg.data:
        raise ConfigError("no dataset given: pass --data or set it in the config file")
    ds = load_interactions(cfg.data)
    filtered = filter_multilevel(ds, cfg.filter_policy)
    if not filtered.records:
        raise ParseError(
            f"no users qualify under filter policy {cfg.filter_policy!r} in {cfg.data}"
        )
    return filtered


def _aligned_features(cfg: RunConfig, ds: Dataset) -> np.ndarray | None:
    """Feature rows for ds.item_ids, loaded from cfg.features; None if unset."""
    if not cfg.features:
        return None
    ids, feats = load_item_features(cfg.features)
    return _align_features(ds, ids, feats, cfg.d)


def _align_features(ds: Dataset, ids, feats: np.ndarray, d: int) -> np.ndarray:
    if feats.shape[1] != d:
        raise ConfigError(
            f"feature file has width {feats.shape[1]} but model d is {d}"
        )
    index = {s: i for i, s in enumerate(ids)}
    rows = []
    for s in ds.item_ids:
        if s not in index:
            raise ParseError(f"feature file has no row for item {s!r}")
        rows.append(feats[index[s]])
    return np.array(rows, dtype=np.float64)


def cmd_synth(cfg: RunConfig) -> int:
    ds, feats = gen_synthetic(cfg.synth_config())
    out = _out_dir(cfg)
    save_interactions(ds, out / "interactions.csv")
    save_item_features(out / "item_features.csv", ds.item_ids, feats)
    clicks = sum(r.click for r in ds.records)
    likes = sum(r.like for r in ds.records)
    follows = sum(r.follow for r in ds.records)
    print(
        f"wrote {len(ds)} records for {ds.n_users} users over {ds.n_items} items "
        f"({clicks} clicks, {likes} likes, {follows} follows) to {out}"
    )
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    filtered = _load_filtered(cfg)
    train_ds, _ = split_train_test(filtered, cfg.split_ratio)
    model = new_model(
        filtered.item_ids,
        d=cfg.d,
        hidden=cfg.hidden,
        seed_rng=rng_stream(cfg.seed, MODEL_INIT),
        variant=cfg.variant,
        use_soc=cfg.use_soc,
        literal_self=cfg.literal_self,
        scale_attention=cfg.scale_attention,
        item_features=_aligned_features(cfg, filtered),
    )
    curve = train(model, train_ds, cfg.train_config())
    out = _out_dir(cfg)
    save_model(out / "model.scaa", model)
    save_loss_curve(out / "loss_curve.csv", curve)
    tail = f", final mean loss {curve[-1]:.4f}" if curve else ""
    print(
        f"trained {_variant_row_name(cfg)} on {len(train_ds)} records "
        f"({cfg.epochs} epochs{tail}); checkpoint at {out / 'model.scaa'}"
    )
    return EXIT_OK


def _remap_to_model(records, ds: Dataset, item_index: dict[str, int]):
    """Re-key record item ids from the dataset's table to the model's."""
    out = []
    for r in records:
        ext = ds.item_ids[r.item]
        if ext not in item_index:
            raise ParseError(f"item {ext!r} is not in the checkpoint's item table")
        out.append(r.__class__(r.user, item_index[ext], r.click, r.like, r.follow, r.timestamp))
    return out


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise ConfigError("eval requires --checkpoint")
    model = load_model(cfg.checkpoint)
    filtered = _load_filtered(cfg)
    train_ds, test_ds = split_train_test(filtered, cfg.split_ratio)
    item_index = model.items.index
    train_records = _remap_to_model(train_ds.records, filtered, item_index)
    test_records = _remap_to_model(test_ds.records, filtered, item_index)
    histories = build_histories(train_records, model.items.item_count)
    rep = evaluate_all(model, test_records, histories, k=cfg.k, threads=cfg.threads)
    out = _out_dir(cfg)
    name = {"none": "SCAA_cs", "co_only": "SCAA_s", "full": "SCAA"}[model.variant]
    if not model.use_soc:
        name = "base"
    table = format_report_table([(name, rep)], k=cfg.k)
    (out / "eval_report.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    (out / "eval_report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def cmd_ablate(cfg: RunConfig) -> int:
    seeds = list(range(cfg.seed, cfg.seed + cfg.seeds))
    fixed_data = None
    if cfg.data:
        fixed_data = _load_filtered(cfg)
        fixed_feats = _aligned_features(cfg, fixed_data)

    results = []
    for s in seeds:
        if fixed_data is not None:
            ds, feats = fixed_data, fixed_feats
        else:
            raw, gen_feats = gen_synthetic(cfg.synth_config(seed=s))
            ds = filter_multilevel(raw, cfg.filter_policy)
            if not ds.records:
                raise ParseError(f"synthetic seed {s}: no users pass the filter")
            feats = _align_features(ds, raw.item_ids, gen_feats, cfg.d)
        res = run_ablation(
            ds,
            cfg.train_config(seed=s),
            d=cfg.d,
            hidden=cfg.hidden,
            split_ratio=cfg.split_ratio,
            k=cfg.k,
            item_features=feats,
            literal_self=cfg.literal_self,
            scale_attention=cfg.scale_attention,
            threads=cfg.threads,
        )
        results.append(res)
        print(f"seed {s}")
        print(format_ablation_table(res, k=cfg.k))

    names = [name for name, _ in results[0].rows]
    mean_rows = {
        name: {
            metric: float(np.mean([getattr(dict(r.rows)[name], metric) for r in results]))
            for metric in ("auc", "recall", "precision", "f1", "precision_strict")
        }
        for name in names
    }
    mean_improvement = float(np.mean([r.improvement for r in results]))

    report = {
        "k": cfg.k,
        "seeds": seeds,
        "per_seed": [r.report() for r in results],
        "mean": mean_rows,
        "mean_improvement_full_over_base": mean_improvement,
    }
    out = _out_dir(cfg)
    (out / "ablation_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    lines = []
    for s, r in zip(seeds, results):
        lines.append(f"seed {s}")
        lines.append(format_ablation_table(r, k=cfg.k))
        lines.append("")
    lines.append(f"mean over {len(seeds)} seed(s)")
    header = f"{'model':<10} {'AUC':>6} {f'R@{cfg.k}':>6} {f'P@{cfg.k}':>6} {f'F@{cfg.k}':>6}"
    lines.append(header)
    for name in names:
        m = mean_rows[name]
        lines.append(
            f"{name:<10} {m['auc']:>6.3f} {m['recall']:>6.3f} "
            f"{m['precision']:>6.3f} {m['f1']:>6.3f}"
        )
    lines.append(
        f"mean relative AUC improvement, SCAA over base: {100.0 * mean_improvement:+.1f}%"
    )
    text = "\n".join(lines)
    (out / "ablation_report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# Gradcheck geometry: small enough for finite differences over every single
# parameter entry, big enough to exercise all code paths.
#
# Numerics: a central difference of a loss L can resolve a component gradient
# g to relative accuracy ~ulp(L)/(2*eps*g); for an O(1) loss and admissible
# eps, components with g below ~1e-5 cannot be certified to 1e-6. Checking
# the loss in 1e-3 units pushes those unresolvable components under the
# checker's 1e-8 denominator floor (noise scales down with them) while every
# resolvable component keeps its relative error unchanged. The step sits at
# the measured noise/truncation crossover for this geometry.
_GC_D = 4
_GC_M = 3
_GC_N = 2
_GC_HIDDEN = 8
_GC_ITEMS = 10
_GC_EPS = 5e-5
_GC_LOSS_SCALE = 1e-3
_GC_TOL = 1e-6


def _gradcheck_once(seed: int) -> float:
    rng = rng_stream(seed, GRADCHECK)
    model = new_model(
        [f"i{j}" for j in range(_GC_ITEMS)],
        d=_GC_D,
        hidden=_GC_HIDDEN,
        seed_rng=rng,
        variant="full",
        use_soc=True,
    )
    ids = rng.permutation(_GC_ITEMS)
    h = UserHistory(
        clicked=tuple(int(x) for x in ids[: _GC_M + _GC_N]),
        liked=tuple(int(x) for x in ids[: _GC_M]),
        followed=tuple(int(x) for x in ids[_GC_M : _GC_M + _GC_N]),
    )
    cands = [int(x) for x in ids[_GC_M + _GC_N : _GC_M + _GC_N + 2]]
    labels = rng.integers(0, 2, len(cands)).astype(np.float64)

    def f():
        return scale(bce_loss(user_logits(model, h, cands), labels), _GC_LOSS_SCALE)

    return grad_check(f, model.params(), eps=_GC_EPS)


def cmd_gradcheck(cfg: RunConfig) -> int:
    worst = 0.0
    for t in range(cfg.trials):
        if cfg.inject_fault:
            with gradient_fault():
                err = _gradcheck_once(cfg.seed + t)
        else:
            err = _gradcheck_once(cfg.seed + t)
        worst = max(worst, err)
    ok = worst < _GC_TOL
    print(
        f"gradcheck: max relative error {worst:.3e} over {cfg.trials} trial(s) "
        f"(d={_GC_D}, m={_GC_M}, n={_GC_N}, hidden={_GC_HIDDEN}) -> "
        f"{'PASS' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_NUMERIC


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    p.add_argument("--out", help="output directory (default runs)")
    p.add_argument("--threads", type=int, help="evaluation thread cap (default 1)")


def _add_data(p: argparse.ArgumentParser):
    p.add_argument("--data", help="interaction CSV path")
    p.add_argument("--features", help="item feature CSV to initialize embeddings")
    p.add_argument("--filter-policy", dest="filter_policy", choices=("and", "or"),
                   help="keep users with like AND follow, or either (default and)")
    p.add_argument("--split-ratio", dest="split_ratio", type=float,
                   help="per-user chronological train fraction (default 0.8)")


def _add_model(p: argparse.ArgumentParser):
    p.add_argument("--d", type=int, help="embedding dimension (default 16)")
    p.add_argument("--hidden", type=int, help="head hidden width (default 2d)")
    p.add_argument("--variant", choices=("full", "co_only", "none"),
                   help="attention variant (default full)")
    p.add_argument("--no-soc", dest="use_soc", action="store_const", const=False,
                   help="remove the interest path entirely (baseline)")
    p.add_argument("--literal-self", dest="literal_self", action="store_const",
                   const=True, help="self-attention reads raw features via co weights")
    p.add_argument("--scale-attention", dest="scale_attention", action="store_const",
                   const=True, help="divide attention logits by sqrt(d)")


def _add_train(p: argparse.ArgumentParser):
    p.add_argument("--epochs", type=int, help="training epochs (default 10)")
    p.add_argument("--batch-size", dest="batch_size", type=int,
                   help="max examples per step (default 64)")
    p.add_argument("--lr", type=float, help="learning rate (default 1e-3)")
    p.add_argument("--optimizer", choices=("sgd", "adam"), help="default adam")
    p.add_argument("--beta1", type=float, help="adam beta1 (default 0.9)")
    p.add_argument("--beta2", type=float, help="adam beta2 (default 0.999)")
    p.add_argument("--eps", type=float, help="adam epsilon (default 1e-8)")


def _add_synth(p: argparse.ArgumentParser):
    p.add_argument("--users", type=int, help="synthetic user count (default 500)")
    p.add_argument("--items", type=int, help="synthetic item count (default 2000)")
    p.add_argument("--d-latent", dest="d_latent", type=int,
                   help="latent feature dimension (default 16)")
    p.add_argument("--topics", type=int, help="latent topic count (default 10)")
    p.add_argument("--like-rate", dest="like_rate", type=float,
                   help="base like rate (default 0.35)")
    p.add_argument("--follow-rate", dest="follow_rate", type=float,
                   help="base follow rate (default 0.15)")
    p.add_argument("--exposure-per-user", dest="exposure_per_user", type=int,
                   help="exposures per user (default 45)")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float,
                   help="item feature noise scale (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="scaa",
        description="Multi-level-interest click prediction: data, training, "
        "evaluation, and ablation in one reproducible harness.",
    )
    ap.set_defaults(func=None)
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic interaction log")
    _add_common(p)
    _add_synth(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    _add_train(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", help="model container to evaluate")
    p.add_argument("--k", type=int, help="ranking cutoff (default 50)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare base/SCAA_cs/SCAA_s/SCAA")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    _add_train(p)
    _add_synth(p)
    p.add_argument("--k", type=int, help="ranking cutoff (default 50)")
    p.add_argument("--seeds", type=int,
                   help="repeat for seeds s..s+N-1 and report the mean (default 1)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_common(p)
    p.add_argument("--trials", type=int, help="random model/history trials (default 20)")
    p.add_argument("--inject-fault", dest="inject_fault", action="store_const",
                   const=True, help="corrupt one backward rule; the check must fail")
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.func is None:
        ap.print_help()
        return EXIT_CONFIG
    try:
        cfg = build_run_config(args)
        return args.func(cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, CheckpointError, UndefinedMetricError, IndexError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
