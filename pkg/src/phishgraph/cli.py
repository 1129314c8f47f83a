"""Command-line front end wiring the pipeline together.

Subcommands: ingest, synth, run, importance, stats, compare. Every invocation
resolves its configuration (flags > config file > defaults), writes a manifest
recording inputs, digests, and seeds before any other artifact, and then runs.
All randomness funnels through named seeds recorded in the manifest, so a
rerun with identical inputs produces byte-identical artifacts.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error, 3 runtime
model failure (e.g. a single-class training split).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ApiError,
    ClassAbsent,
    EmptyMask,
    InvalidAddress,
    InvalidConfig,
    InvalidNumeral,
    InvalidTransaction,
    MalformedDocument,
    MalformedHeader,
    NetworkError,
    PipelineError,
    RateLimited,
    ShapeMismatch,
    SingleClass,
    StorageError,
)
from .evaluate import emit_report, stratified_split
from .features import (
    concat_features,
    extract_explicit,
    extract_implicit,
    fit_minmax,
)
from .gcn import GcnConfig, save_model, train
from .graph import build_graph, to_training_inputs
from .ingest import PhishingList, clean, label_dataset, parse_etherscan_csv, parse_etherscan_json
from .stats import ForestConfig, class_feature_stats, feature_importance, train_forest, write_importance
from .storage import load_dataset, save_dataset, sha256_file
from .synthetic import SyntheticConfig, generate_synthetic

# transport-level failures exit 1; bad content or arguments exit 2
_IO_ERRORS = (NetworkError, RateLimited)
_USAGE_ERRORS = (
    InvalidConfig,
    InvalidAddress,
    InvalidNumeral,
    InvalidTransaction,
    MalformedDocument,
    MalformedHeader,
    StorageError,
    EmptyMask,
    ShapeMismatch,
    ApiError,
)
_MODEL_ERRORS = (SingleClass, ClassAbsent)

FEATURE_SETS = ("explicit", "implicit", "both")


def _write_manifest(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _digests(paths: list[str | Path]) -> dict[str, str]:
    return {str(p): sha256_file(p) for p in paths}


def _extract(ds, g, feature_set: str):
    if feature_set == "explicit":
        return extract_explicit(ds, g)
    if feature_set == "implicit":
        return extract_implicit(ds, g)
    if feature_set == "both":
        return concat_features(extract_explicit(ds, g), extract_implicit(ds, g))
    raise InvalidConfig(f"unknown feature set {feature_set!r}")


# ---------------------------------------------------------------- ingest


def _cmd_ingest(args) -> int:
    out = Path(args.out)
    inputs = list(args.tx) + [args.phishing_list] + (
        [args.verified] if args.verified else []
    )
    manifest = {
        "subcommand": "ingest",
        "tool_version": __version__,
        "inputs": _digests(inputs),
        "config": {
            "require_verified": bool(args.require_verified),
            "tx_files": [str(p) for p in args.tx],
            "phishing_list": str(args.phishing_list),
            "verified": str(args.verified) if args.verified else None,
        },
        "artifacts": [out.name, out.name + ".clean.json"],
    }
    _write_manifest(Path(str(out) + ".manifest.json"), manifest)

    transactions = []
    reject_sections = []
    for tx_path in args.tx:
        suffix = Path(tx_path).suffix.lower()
        try:
            if suffix == ".json":
                result = parse_etherscan_json(tx_path)
            else:
                result = parse_etherscan_csv(tx_path)
        except (MalformedHeader, MalformedDocument) as exc:
            raise type(exc)(f"{tx_path}: {exc}") from None
        transactions.extend(result.transactions)
        reject_sections.append({"file": str(tx_path), **result.rejects_json()})

    cleaned, report = clean(transactions)
    plist = PhishingList.from_files(args.phishing_list, args.verified)
    ds = label_dataset(cleaned, plist, require_verified=args.require_verified)
    save_dataset(ds, out)
    Path(str(out) + ".clean.json").write_text(
        json.dumps(
            {"clean": report.to_json(), "parse": reject_sections},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    benign, phishing = ds.class_counts()
    print(
        f"ingested {len(ds.transactions)} transactions "
        f"({benign} benign / {phishing} phishing addresses) -> {out}"
    )
    return 0


# ----------------------------------------------------------------- synth


def _synth_config(args) -> SyntheticConfig:
    if args.config:
        payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        payload = {}
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.benign is not None:
        payload["n_benign_addresses"] = args.benign
    if args.phishing is not None:
        payload["n_phishing_addresses"] = args.phishing
    return SyntheticConfig.from_json(payload)


def _cmd_synth(args) -> int:
    cfg = _synth_config(args)
    out = Path(args.out)
    manifest = {
        "subcommand": "synth",
        "tool_version": __version__,
        "inputs": _digests([args.config] if args.config else []),
        "config": cfg.to_json(),
        "seeds": {"generator": cfg.seed},
        "artifacts": [out.name],
    }
    _write_manifest(Path(str(out) + ".manifest.json"), manifest)
    ds = generate_synthetic(cfg)
    save_dataset(ds, out)
    benign, phishing = ds.class_counts()
    print(
        f"generated {len(ds.transactions)} transactions over "
        f"{benign + phishing} addresses ({phishing} phishing) -> {out}"
    )
    return 0


# ------------------------------------------------------------------- run


def _gcn_config(args) -> GcnConfig:
    manual = None
    if args.manual_weights:
        parts = [float(x) for x in args.manual_weights.split(",")]
        if len(parts) != 2:
            raise InvalidConfig("--manual-weights expects 'benign,phishing'")
        manual = (parts[0], parts[1])
    cfg = GcnConfig(
        hidden_dims=tuple(int(x) for x in args.hidden_dims.split(",") if x),
        dropout_rate=args.dropout,
        learning_rate=args.lr,
        epochs=args.epochs,
        weight_mode=args.weight_mode.replace("-", "_"),
        manual_weights=manual,
        seed=args.train_seed,
        optimizer=args.optimizer,
        threshold=args.threshold,
        use_bias=args.use_bias,
    )
    cfg.validate()
    return cfg


def _run_once(args, dataset_path: Path, feature_set: str, out_dir: Path) -> dict:
    cfg = _gcn_config(args)
    manifest = {
        "subcommand": "run",
        "tool_version": __version__,
        "inputs": _digests([dataset_path]),
        "config": {
            "features": feature_set,
            "split_ratio": args.ratio,
            "fit_all": bool(args.fit_all),
            "add_self_loops": not args.no_self_loops,
            "symmetrize": not args.no_symmetrize,
            "gcn": cfg.to_json(),
        },
        "seeds": {"split": args.split_seed, "train": args.train_seed},
        "artifacts": ["model.bin", "model.bin.json", "metrics.json", "report.txt"],
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(out_dir / "manifest.json", manifest)

    ds = load_dataset(dataset_path)
    g = build_graph(ds)
    if g.n_nodes == 0:
        raise InvalidConfig("dataset contains no transactions")
    X = _extract(ds, g, feature_set)
    labels = np.array([int(ds.labels[a]) for a in g.addresses], dtype=np.int64)
    split = stratified_split(labels, ratio=args.ratio, seed=args.split_seed)
    fit_mask = np.ones(g.n_nodes, dtype=bool) if args.fit_all else split.train_mask
    X_norm = fit_minmax(X, fit_mask)
    batch = to_training_inputs(
        g,
        X_norm,
        ds,
        split,
        add_self_loops=not args.no_self_loops,
        symmetrize=not args.no_symmetrize,
    )
    model, report = train(batch, cfg)
    save_model(model, out_dir / "model.bin", cfg, X.names)
    emit_report(out_dir, metrics_report=report.final_test, train_report=report)
    final = report.final_test
    print(
        f"[{feature_set}] test weighted F1 {final.weighted_f1:.2f}, "
        f"phishing recall {final.recall['phishing']:.2f} -> {out_dir}"
    )
    return final.to_dict()


def _cmd_run(args) -> int:
    _run_once(args, Path(args.dataset), args.features, Path(args.out_dir))
    return 0


def _cmd_compare(args) -> int:
    out_dir = Path(args.out_dir)
    results = {}
    for feature_set in ("explicit", "implicit"):
        results[feature_set] = _run_once(
            args, Path(args.dataset), feature_set, out_dir / feature_set
        )
    deltas = {
        "phishing_recall": (
            results["implicit"]["per_class"]["phishing"]["recall"]
            - results["explicit"]["per_class"]["phishing"]["recall"]
        ),
        "weighted_f1": (
            results["implicit"]["weighted"]["f1"]
            - results["explicit"]["weighted"]["f1"]
        ),
    }
    (out_dir / "comparison.json").write_text(
        json.dumps(
            {"explicit": results["explicit"], "implicit": results["implicit"], "delta": deltas},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(
        f"implicit - explicit: phishing recall {deltas['phishing_recall']:+.2f}, "
        f"weighted F1 {deltas['weighted_f1']:+.2f}"
    )
    return 0


# ------------------------------------------------------------------ fetch

API_KEY_ENV = "PHISHGRAPH_API_KEY"


def _cmd_fetch(args) -> int:
    from .fetch import fetch_address_history
    from .txmodel import Address

    api_key = args.api_key or os.environ.get(API_KEY_ENV)
    if not api_key:
        raise InvalidConfig(
            f"no API key: pass --api-key or set {API_KEY_ENV}"
        )
    out = Path(args.out)
    manifest = {
        "subcommand": "fetch",
        "tool_version": __version__,
        "inputs": {},
        "config": {
            "address": args.address,
            "endpoint": args.endpoint,
            "page_limit": args.page_limit,
            "page_size": args.page_size,
            "requests_per_second": args.rate,
        },
        "artifacts": [out.name],
    }
    _write_manifest(Path(str(out) + ".manifest.json"), manifest)

    txs = fetch_address_history(
        Address(args.address),
        args.endpoint,
        api_key,
        page_limit=args.page_limit,
        page_size=args.page_size,
        requests_per_second=args.rate,
    )
    # re-emit the explorer envelope (string-typed numerics) so the result
    # feeds straight back into `ingest --tx`
    entries = [
        {
            "blockNumber": str(tx.block_number),
            "timeStamp": str(tx.timestamp),
            "hash": tx.tx_hash,
            "from": str(tx.sender),
            "to": str(tx.receiver),
            "value": str(tx.value),
            "gas": str(tx.gas),
            "gasPrice": str(tx.gas_price),
            "gasUsed": str(tx.gas_used),
        }
        for tx in txs
    ]
    out.write_text(
        json.dumps(
            {"status": "1", "message": "OK", "result": entries},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"fetched {len(txs)} transactions for {args.address} -> {out}")
    return 0


# ------------------------------------------------------------- importance


def _cmd_importance(args) -> int:
    out = Path(args.out)
    cfg = ForestConfig(
        n_trees=args.trees,
        max_depth=args.max_depth,
        feature_subsample=args.feature_subsample,
        min_leaf=args.min_leaf,
        seed=args.seed,
        balanced=args.balanced,
    )
    manifest = {
        "subcommand": "importance",
        "tool_version": __version__,
        "inputs": _digests([args.dataset]),
        "config": {
            "feature_set": args.feature_set,
            "n_trees": cfg.n_trees,
            "max_depth": cfg.max_depth,
            "feature_subsample": cfg.feature_subsample,
            "min_leaf": cfg.min_leaf,
            "balanced": cfg.balanced,
        },
        "seeds": {"forest": cfg.seed},
        "artifacts": [out.name],
    }
    _write_manifest(Path(str(out) + ".manifest.json"), manifest)

    ds = load_dataset(args.dataset)
    g = build_graph(ds)
    if g.n_nodes == 0:
        raise InvalidConfig("dataset contains no transactions")
    X = _extract(ds, g, args.feature_set)
    labels = np.array([int(ds.labels[a]) for a in g.addresses], dtype=np.int64)
    forest = train_forest(X, labels, cfg)
    ranking = feature_importance(forest)
    write_importance(ranking, out)
    top_name, top_score = ranking[0]
    print(f"top feature: {top_name} ({top_score:.3f}) -> {out}")
    return 0


# ------------------------------------------------------------------ stats


def _cmd_stats(args) -> int:
    out = Path(args.out)
    manifest = {
        "subcommand": "stats",
        "tool_version": __version__,
        "inputs": _digests([args.dataset]),
        "config": {"feature_set": args.feature_set},
        "artifacts": [out.name],
    }
    _write_manifest(Path(str(out) + ".manifest.json"), manifest)

    ds = load_dataset(args.dataset)
    if not ds.transactions:
        raise InvalidConfig("dataset contains no transactions")
    g = build_graph(ds)
    X = _extract(ds, g, args.feature_set)
    labels = np.array([int(ds.labels[a]) for a in g.addresses], dtype=np.int64)
    stats = class_feature_stats(X, labels)
    stats.to_csv(out)
    print(f"wrote per-class statistics for {X.n_features} features -> {out}")
    return 0


# ------------------------------------------------------------------ main


def _add_gcn_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--hidden-dims", default="64,32", help="comma-separated widths")
    parser.add_argument("--dropout", type=float, default=0.5)
    parser.add_argument("--lr", type=float, default=0.01)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument(
        "--weight-mode",
        choices=("uniform", "inverse-frequency", "manual"),
        default="inverse-frequency",
    )
    parser.add_argument("--manual-weights", default=None, help="'benign,phishing'")
    parser.add_argument("--threshold", type=float, default=0.5)
    parser.add_argument("--optimizer", choices=("adam", "gd"), default="adam")
    parser.add_argument("--use-bias", action="store_true")
    parser.add_argument("--ratio", type=float, default=0.8, help="train fraction")
    parser.add_argument("--split-seed", type=int, default=0)
    parser.add_argument("--train-seed", type=int, default=0)
    parser.add_argument("--fit-all", action="store_true",
                        help="fit the scaler on all rows, not just the training rows")
    parser.add_argument("--no-self-loops", action="store_true")
    parser.add_argument("--no-symmetrize", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phishgraph",
        description="Phishing-address detection pipeline over transaction graphs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, clean, and label transaction exports")
    p.add_argument("--tx", action="append", required=True,
                   help="CSV or JSON export (repeatable)")
    p.add_argument("--phishing-list", required=True)
    p.add_argument("--verified", default=None)
    p.add_argument("--require-verified", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--benign", type=int, default=None)
    p.add_argument("--phishing", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="train and evaluate one feature set")
    p.add_argument("--dataset", required=True)
    p.add_argument("--features", choices=FEATURE_SETS, required=True)
    p.add_argument("--out-dir", required=True)
    _add_gcn_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="run explicit and implicit, diff the reports")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    _add_gcn_flags(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("fetch", help="retrieve an address history via explorer API")
    p.add_argument("--address", required=True)
    p.add_argument("--endpoint", required=True, help="explorer API base URL")
    p.add_argument("--api-key", default=None,
                   help=f"falls back to the {API_KEY_ENV} environment variable")
    p.add_argument("--page-limit", type=int, default=10)
    p.add_argument("--page-size", type=int, default=100)
    p.add_argument("--rate", type=float, default=5.0, help="max requests per second")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fetch)

    p = sub.add_parser("importance", help="random-forest feature importance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--feature-set", choices=FEATURE_SETS, default="implicit")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--min-leaf", type=int, default=2)
    p.add_argument("--feature-subsample", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_importance)

    p = sub.add_parser("stats", help="per-class feature statistics CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--feature-set", choices=FEATURE_SETS, default="implicit")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _MODEL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
