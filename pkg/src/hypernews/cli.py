"""Command-line interface.

Subcommands: synth-gen, build-hypergraph, stats, train, evaluate, gradcheck,
ablate, sweep-labels, baseline-clique, credibility, attention-sample.

Global flags: --seed overrides config/generator seeds, --precision selects
f32/f64 parameters, --threads caps BLAS thread pools (set before numpy loads,
which is why imports below are deferred into main()).
"""
from __future__ import annotations

import argparse
import json
import os
import sys


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypernews",
        description="Hypergraph neural network engine for relational fake news detection",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the seed")
    parser.add_argument("--precision", choices=["f32", "f64"], default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS threads (must be the first numpy use)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--n-news", type=int, default=200)
    p.add_argument("--n-users", type=int, default=60)
    p.add_argument("--fake-fraction", type=float, default=0.5)
    p.add_argument("--fidelity", type=float, default=0.95)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.5)

    p = sub.add_parser("build-hypergraph", help="build and save the hypergraph")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kinds", default="user,time,entity")
    p.add_argument("--time-granularity", choices=["auto", "day", "hour"], default="auto")
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="print hypergraph statistics as CSV")
    p.add_argument("--hypergraph", required=True)

    p = sub.add_parser("train", help="train the model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out-checkpoint", default=None)
    p.add_argument("--report", default=None, help="write a JSON training report")
    p.add_argument("--attention-out", default=None, help="write attention CSV")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--config", default=None)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--d", type=int, default=3, help="hidden dimension")
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("ablate", help="train on every hyperedge-kind subset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--time-granularity", choices=["auto", "day", "hour"], default="auto")
    p.add_argument("--out", default=None, help="also write the table as CSV")

    p = sub.add_parser("sweep-labels", help="training-label-fraction sweep")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--fractions", default="1.0,0.75,0.5,0.25")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--time-granularity", choices=["auto", "day", "hour"], default="auto")
    p.add_argument("--out", default=None)

    p = sub.add_parser("baseline-clique", help="mean-aggregation GNN on the clique expansion")
    p.add_argument("--dataset", required=True)
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--config", default=None)

    p = sub.add_parser("credibility", help="per-user credibility and attention table")
    p.add_argument("--dataset", required=True)
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="write the table as CSV")
    p.add_argument("--edge-embeddings", default=None,
                   help="write final hyperedge representations as a matrix file")

    p = sub.add_parser("attention-sample", help="top/bottom attention sampling table")
    p.add_argument("--credibility", required=True, help="CSV from the credibility command")
    p.add_argument("--ratios", default="0.10,0.15,0.20,0.25")

    return parser


def _floats(spec: str) -> list[float]:
    return [float(tok) for tok in spec.split(",") if tok]


def _ints(spec: str) -> list[int]:
    return [int(tok) for tok in spec.split(",") if tok]


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    # Deferred so --threads takes effect before numpy initialises its pools.
    import numpy as np

    from . import analysis, attention, data, hypergraph, matrixio, training

    def load_config() -> training.TrainConfig:
        config = (
            training.TrainConfig.from_file(args.config)
            if getattr(args, "config", None)
            else training.TrainConfig()
        )
        if args.seed is not None:
            config = config.__class__(**{**config.__dict__, "seed": args.seed})
        if args.precision is not None:
            config = config.__class__(**{**config.__dict__, "precision": args.precision})
        config.validate()
        return config

    def granularity(ds) -> str:
        if getattr(args, "time_granularity", "auto") != "auto":
            return args.time_granularity
        return hypergraph.default_time_granularity(ds.n_items)

    if args.command == "synth-gen":
        config = data.SyntheticConfig(
            n_news=args.n_news,
            n_users=args.n_users,
            fake_fraction=args.fake_fraction,
            user_fidelity=args.fidelity,
            feature_dim=args.feature_dim,
            signal_strength=args.signal,
            noise_scale=args.noise,
            seed=args.seed if args.seed is not None else 0,
        )
        ds = data.generate_synthetic(config)
        data.write_dataset(ds, args.out)
        print(f"wrote {ds.n_items} news items to {args.out}")
        return 0

    if args.command == "build-hypergraph":
        ds = data.load_dataset_dir(args.dataset)
        kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
        hg = hypergraph.build_hypergraph(ds, kinds=kinds, time_granularity=granularity(ds))
        hypergraph.save_hypergraph(hg, args.out)
        print(f"wrote hypergraph with {hg.n_nodes} nodes, {hg.n_hyperedges} hyperedges")
        return 0

    if args.command == "stats":
        hg = hypergraph.load_hypergraph(args.hypergraph)
        print("kind,n_hyperedges,mean_size,max_size,mean_degree,max_degree")
        for row in hypergraph.hypergraph_stats(hg):
            print(
                f"{row.kind},{row.n_hyperedges},{row.mean_size:.4f},{row.max_size},"
                f"{row.mean_degree:.4f},{row.max_degree}"
            )
        return 0

    if args.command == "train":
        config = load_config()
        ds = data.load_dataset_dir(args.dataset)
        hg = hypergraph.load_hypergraph(args.hypergraph)
        params, report = training.train(config, ds, hg)
        if args.out_checkpoint:
            training.save_checkpoint(params, args.out_checkpoint)
        if args.attention_out:
            attention.export_attention_csv(report.snapshot, args.attention_out)
        if args.report:
            payload = {
                "best_epoch": report.best_epoch,
                "epochs": [vars(e) for e in report.epochs],
                "test_metrics": _metrics_dict(report.test_metrics),
                "wall_clock_seconds": report.wall_clock_seconds,
            }
            with open(args.report, "w") as fh:
                json.dump(payload, fh, indent=2)
        m = report.test_metrics
        print(
            f"best epoch {report.best_epoch}; test accuracy {m.accuracy:.4f}, "
            f"macro F1 {m.f1_macro:.4f} ({report.wall_clock_seconds:.1f}s)"
        )
        return 0

    if args.command == "evaluate":
        config = load_config()
        ds = data.load_dataset_dir(args.dataset)
        hg = hypergraph.load_hypergraph(args.hypergraph)
        params = training.load_checkpoint(
            args.checkpoint, hidden_dim=config.hidden_dim, feature_dim=ds.feature_dim
        )
        m = analysis.evaluate(params, ds, hg, split=args.split)
        print(analysis.format_table(
            ["split", "accuracy", "f1_macro", "f1_fake", "f1_true", "n"],
            [[args.split, f"{m.accuracy:.4f}", f"{m.f1_macro:.4f}",
              f"{m.f1_fake:.4f}", f"{m.f1_true:.4f}", m.n]],
        ))
        return 0

    if args.command == "gradcheck":
        seed = args.seed if args.seed is not None else 0
        params, ds, hg = training.make_gradcheck_fixture(hidden_dim=args.d, seed=seed)
        report = training.grad_check(params, ds, hg, tolerance=args.tolerance)
        print(analysis.format_table(
            ["tensor", "max_rel_error"],
            [[name, f"{err:.3e}"] for name, err in report.max_rel_error.items()],
        ))
        print(f"worst {report.worst:.3e} vs tolerance {report.tolerance:g}: "
              + ("PASS" if report.passed else "FAIL " + ",".join(report.offenders)))
        return 0 if report.passed else 1

    if args.command == "ablate":
        config = load_config()
        ds = data.load_dataset_dir(args.dataset)
        rows = analysis.ablate_hyperedge_types(
            config, ds, _ints(args.seeds), time_granularity=granularity(ds)
        )
        table = analysis.summary_rows_for_output(rows)
        print(analysis.format_table(analysis.SUMMARY_HEADER, table))
        if args.out:
            analysis.write_csv(args.out, analysis.SUMMARY_HEADER, table)
        return 0

    if args.command == "sweep-labels":
        config = load_config()
        ds = data.load_dataset_dir(args.dataset)
        rows = analysis.sweep_label_fraction(
            config, ds, _floats(args.fractions), _ints(args.seeds),
            time_granularity=granularity(ds),
        )
        table = analysis.summary_rows_for_output(rows)
        print(analysis.format_table(analysis.SUMMARY_HEADER, table))
        if args.out:
            analysis.write_csv(args.out, analysis.SUMMARY_HEADER, table)
        return 0

    if args.command == "baseline-clique":
        config = load_config()
        ds = data.load_dataset_dir(args.dataset)
        hg = hypergraph.load_hypergraph(args.hypergraph)
        m = analysis.baseline_clique_gnn(config, ds, hg)
        print(analysis.format_table(
            ["model", "accuracy", "f1_macro"],
            [["clique-gnn", f"{m.accuracy:.4f}", f"{m.f1_macro:.4f}"]],
        ))
        return 0

    if args.command == "credibility":
        config = load_config()
        ds = data.load_dataset_dir(args.dataset)
        hg = hypergraph.load_hypergraph(args.hypergraph)
        params = training.load_checkpoint(
            args.checkpoint, hidden_dim=config.hidden_dim, feature_dim=ds.feature_dim
        )
        _, snapshot = attention.forward(params, ds, hg)
        records = analysis.credibility_table(ds, hg, snapshot)
        header = ["user_key", "credibility", "n_news", "mean_beta"]
        rows = [
            [r.user_key, f"{r.credibility:.6f}", r.n_news, f"{r.mean_beta:.6e}"]
            for r in records
        ]
        print(analysis.format_table(header, rows[:20]))
        if len(rows) > 20:
            print(f"... {len(rows) - 20} more rows")
        if args.out:
            analysis.write_csv(args.out, header, rows)
        if args.edge_embeddings:
            matrixio.write_matrix(args.edge_embeddings, snapshot.edge_states)
        return 0

    if args.command == "attention-sample":
        records = []
        import csv as _csv

        with open(args.credibility, newline="") as fh:
            for row in _csv.DictReader(fh):
                records.append(
                    analysis.CredibilityRecord(
                        user_key=row["user_key"],
                        credibility=float(row["credibility"]),
                        n_news=int(row["n_news"]),
                        mean_beta=float(row["mean_beta"]),
                    )
                )
        rows = analysis.attention_user_sampling(records, _floats(args.ratios))
        print(analysis.format_table(
            ["ratio", "n", "top_high_pct", "top_low_pct", "bottom_high_pct", "bottom_low_pct"],
            [[f"{r.ratio:.2f}", r.n_sampled, f"{r.top_high_pct:.1f}", f"{r.top_low_pct:.1f}",
              f"{r.bottom_high_pct:.1f}", f"{r.bottom_low_pct:.1f}"] for r in rows],
        ))
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def _metrics_dict(m) -> dict:
    return {
        "accuracy": m.accuracy,
        "f1_macro": m.f1_macro,
        "f1_fake": m.f1_fake,
        "f1_true": m.f1_true,
        "n": m.n,
    }


if __name__ == "__main__":
    sys.exit(main())
