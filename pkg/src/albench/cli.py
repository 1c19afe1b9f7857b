"""Command-line surface: gen, imbalance, run, compare, probe, ssl-toy.

Exit codes: 0 success, 1 validation/usage error, 2 I/O or format error.
`--seed` falls back to the ALBENCH_SEED environment variable, then to 1.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import contrastive, orchestrator
from .classifier import MlpConfig
from .contrastive import NtXentConfig
from .dataset import (
    SyntheticSpec,
    apply_imbalance,
    gen_synthetic,
    load_pool,
    save_pool,
)
from .errors import FormatError, ValidationError
from .orchestrator import ExperimentConfig
from .rng import mix
from .strategies import STRATEGIES, StrategyParams

DEFAULT_SEED = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are validation errors: exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _env_seed() -> int:
    raw = os.environ.get("ALBENCH_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"ALBENCH_SEED must be an integer, got {raw!r}")


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok != ""]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}")


def _parse_seeds(text: str) -> list[int]:
    """Either `1,2,3` or the range form `1..5` (inclusive)."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(tok) for tok in text.split(",") if tok != ""]
    except ValueError:
        raise ValidationError(f"expected seeds like '1,2,3' or '1..5', got {text!r}")


def _add_seed(parser) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="master seed (default: $ALBENCH_SEED or 1)",
    )


def _add_mlp_flags(parser) -> None:
    parser.add_argument("--hidden", type=int, default=128, help="hidden layer width")
    parser.add_argument("--dropout", type=float, default=0.3, help="dropout rate")
    parser.add_argument("--lr", type=float, default=0.05, help="SGD learning rate")
    parser.add_argument("--epochs", type=int, default=30, help="training epochs per round")
    parser.add_argument("--batch-size", type=int, default=32, help="mini-batch size")


def _add_protocol_flags(parser) -> None:
    parser.add_argument("--rounds", type=int, default=8, help="query rounds")
    parser.add_argument("--budget", type=int, default=64, help="candidates per round")
    parser.add_argument("--target", type=float, default=0.90, help="target test accuracy")
    parser.add_argument(
        "--skip-threshold", type=float, default=0.8, help="MCFPS certainty skip cutoff"
    )
    parser.add_argument("--k", type=int, default=10, help="MCFPS neighborhood size")
    parser.add_argument("--t", type=int, default=20, help="MC-Dropout forward passes")
    parser.add_argument(
        "--osal-k-range", default="2,10", help="OSAL silhouette search range, e.g. 2,10"
    )
    parser.add_argument(
        "--test-fraction", type=float, default=0.2, help="held-out test fraction"
    )
    parser.add_argument(
        "--refill-on-skip",
        action="store_true",
        help="draw replacement FPS seeds for skipped neighborhoods",
    )
    parser.add_argument(
        "--warm-start",
        action="store_true",
        help="continue training across rounds instead of cold restarts",
    )
    parser.add_argument(
        "--timing",
        action="store_true",
        help="write measured elapsed_ms (breaks byte-identical reruns)",
    )
    _add_mlp_flags(parser)


def build_parser() -> _Parser:
    parser = _Parser(prog="albench", description=__doc__)
    sub = parser.add_subparsers(
        dest="command",
        required=True,
        parser_class=lambda **kw: _Parser(
            formatter_class=argparse.ArgumentDefaultsHelpFormatter, **kw
        ),
    )

    p_gen = sub.add_parser("gen", help="generate a synthetic AEMB pool")
    p_gen.add_argument("--classes", type=int, default=10)
    p_gen.add_argument("--per-class", type=int, default=100)
    p_gen.add_argument("--dim", type=int, default=32)
    p_gen.add_argument("--spread", type=float, default=0.5)
    p_gen.add_argument("--separation", type=float, default=5.0)
    p_gen.add_argument("--out", required=True, help="output AEMB path")
    _add_seed(p_gen)

    p_imb = sub.add_parser("imbalance", help="remove per-class samples from a pool")
    p_imb.add_argument("--data", required=True, help="input AEMB path")
    p_imb.add_argument(
        "--retention", required=True, help="per-class keep fractions, e.g. 1.0,0.1"
    )
    p_imb.add_argument("--out", required=True, help="output AEMB path")
    _add_seed(p_imb)

    p_run = sub.add_parser("run", help="one active-learning run")
    p_run.add_argument("--data", required=True, help="input AEMB path")
    p_run.add_argument(
        "--strategy", required=True, choices=sorted(STRATEGIES), help="query strategy"
    )
    p_run.add_argument("--out", required=True, help="output CSV path")
    _add_protocol_flags(p_run)
    _add_seed(p_run)

    p_cmp = sub.add_parser("compare", help="strategy x seed grid with plots")
    p_cmp.add_argument("--data", required=True, help="input AEMB path")
    p_cmp.add_argument(
        "--strategies",
        default="random,fps,osal,mcfps",
        help="comma-separated strategy ids",
    )
    p_cmp.add_argument("--seeds", default="1..5", help="seeds: '1,2,3' or '1..5'")
    p_cmp.add_argument("--out-dir", required=True, help="output directory")
    p_cmp.add_argument("--jobs", type=int, default=1, help="parallel runs")
    _add_protocol_flags(p_cmp)
    _add_seed(p_cmp)

    p_probe = sub.add_parser("probe", help="accuracy at fixed label fractions")
    p_probe.add_argument("--data", required=True, help="input AEMB path")
    p_probe.add_argument(
        "--fractions", default="0.02,0.05,0.10", help="training fractions"
    )
    p_probe.add_argument(
        "--test-fraction", type=float, default=0.2, help="held-out test fraction"
    )
    _add_mlp_flags(p_probe)
    _add_seed(p_probe)

    p_ssl = sub.add_parser("ssl-toy", help="train the toy contrastive encoder")
    p_ssl.add_argument("--data", required=True, help="raw AEMB pool")
    p_ssl.add_argument("--out", required=True, help="encoded AEMB path")
    p_ssl.add_argument("--tau", type=float, default=0.5, help="NT-Xent temperature")
    p_ssl.add_argument("--epochs", type=int, default=20)
    p_ssl.add_argument("--out-dim", type=int, default=8, help="encoded dimensionality")
    p_ssl.add_argument("--width", type=int, default=64, help="encoder hidden width")
    p_ssl.add_argument("--enc-lr", type=float, default=0.5)
    p_ssl.add_argument("--jitter", type=float, default=0.1, help="view noise scale")
    p_ssl.add_argument("--mask-frac", type=float, default=0.1, help="view mask fraction")
    _add_seed(p_ssl)

    return parser


def _seed_of(args) -> int:
    return args.seed if args.seed is not None else _env_seed()


def _mlp_config(args, pool) -> MlpConfig:
    return MlpConfig(
        input_dim=pool.dim,
        num_classes=pool.num_classes,
        hidden_dims=(args.hidden,),
        dropout_rate=args.dropout,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
    )


def _params(args) -> StrategyParams:
    k_range = _parse_floats(args.osal_k_range)
    if len(k_range) != 2:
        raise ValidationError("--osal-k-range needs exactly two values")
    return StrategyParams(
        neighborhood_k=args.k,
        passes_t=args.t,
        skip_threshold=args.skip_threshold,
        osal_k_range=(int(k_range[0]), int(k_range[1])),
        refill_on_skip=args.refill_on_skip,
    )


def cmd_gen(args) -> int:
    spec = SyntheticSpec(
        classes=args.classes,
        dim=args.dim,
        per_class=args.per_class,
        spread=args.spread,
        separation=args.separation,
        seed=_seed_of(args),
    )
    pool = gen_synthetic(spec)
    save_pool(pool, args.out)
    print(f"wrote {args.out}: n={pool.n} dim={pool.dim} classes={pool.num_classes}")
    return 0


def cmd_imbalance(args) -> int:
    pool = load_pool(args.data)
    out = apply_imbalance(pool, _parse_floats(args.retention), _seed_of(args))
    save_pool(out, args.out)
    counts = ",".join(str(int(c)) for c in out.class_counts())
    print(f"wrote {args.out}: n={out.n} per-class=[{counts}]")
    return 0


def cmd_run(args) -> int:
    pool = load_pool(args.data)
    cfg = ExperimentConfig(
        strategy=args.strategy,
        mlp=_mlp_config(args, pool),
        params=_params(args),
        rounds_max=args.rounds,
        budget_per_round=args.budget,
        target_accuracy=args.target,
        test_fraction=args.test_fraction,
        master_seed=_seed_of(args),
        warm_start=args.warm_start,
        timing=args.timing,
        output_path=args.out,
    )
    record = orchestrator.run_experiment(cfg, pool)
    last = record.rows[-1]
    print(
        f"wrote {args.out}: {record.status} after round {last.round}, "
        f"{last.cumulative_labels} labels, accuracy {last.test_accuracy:.4f}"
    )
    return 0


def cmd_compare(args) -> int:
    pool = load_pool(args.data)
    names = [tok for tok in args.strategies.split(",") if tok]
    for name in names:
        if name not in STRATEGIES:
            raise ValidationError(
                f"unknown strategy {name!r}; valid ids: {', '.join(sorted(STRATEGIES))}"
            )
    cfg = ExperimentConfig(
        strategy=names[0],
        mlp=_mlp_config(args, pool),
        params=_params(args),
        rounds_max=args.rounds,
        budget_per_round=args.budget,
        target_accuracy=args.target,
        test_fraction=args.test_fraction,
        master_seed=_seed_of(args),
        warm_start=args.warm_start,
        timing=args.timing,
    )
    result = orchestrator.compare(
        cfg, names, _parse_seeds(args.seeds), args.out_dir, pool, jobs=args.jobs
    )
    print(
        f"wrote {len(result.run_paths)} run CSVs, {result.aggregate_path}, "
        f"{result.targets_path}, {result.svg_path}"
    )
    return 0


def cmd_probe(args) -> int:
    pool = load_pool(args.data)
    fractions = _parse_floats(args.fractions)
    if not fractions:
        raise ValidationError("--fractions needs at least one value")
    mlp = _mlp_config(args, pool)
    for fraction in fractions:
        acc = orchestrator.probe(
            pool, fraction, _seed_of(args), mlp, test_fraction=args.test_fraction
        )
        print(f"{fraction},{acc:.6f}")
    return 0


def cmd_ssl_toy(args) -> int:
    pool = load_pool(args.data)
    cfg = NtXentConfig(temperature=args.tau)
    seed = _seed_of(args)
    encoder = contrastive.train_encoder(
        pool,
        width=args.width,
        out_dim=args.out_dim,
        cfg=cfg,
        epochs=args.epochs,
        seed=seed,
        learning_rate=args.enc_lr,
        jitter=args.jitter,
        mask_frac=args.mask_frac,
    )
    views = contrastive.make_views(
        pool.features.astype("float64"),
        mix(seed, "ssl-toy-eval"),
        args.jitter,
        args.mask_frac,
    )
    loss = contrastive.batch_loss(encoder, views, cfg)
    encoded = contrastive.encode(encoder, pool)
    save_pool(encoded, args.out)
    print(f"wrote {args.out}: n={encoded.n} dim={encoded.dim} nt-xent loss {loss:.4f}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "imbalance": cmd_imbalance,
    "run": cmd_run,
    "compare": cmd_compare,
    "probe": cmd_probe,
    "ssl-toy": cmd_ssl_toy,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def console_main() -> None:
    raise SystemExit(main())
