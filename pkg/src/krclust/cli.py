"""Command-line front end: gen | fit | eval | design | quantize | fed.

Every subcommand is deterministic given --seed.  Runs can emit a JSON report
(--report PATH) carrying the command echo, resolved configuration, timings,
quality numbers and output paths; the schema is versioned.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import baselines, core, datagen, design, federated, krkmeans, metrics

REPORT_SCHEMA_VERSION = 1


def _parse_h(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise ValueError(f"--h expects a comma list of integers, got {text!r}")


def _write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _base_report(args, argv) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": list(argv),
        "seed": getattr(args, "seed", None),
    }


def _label_metrics(predicted, truth) -> dict:
    return {
        "ari": metrics.ari(predicted, truth),
        "acc": metrics.acc(predicted, truth),
        "nmi": metrics.nmi(predicted, truth),
        "purity": metrics.purity(predicted, truth),
    }


def _write_assignments(path, cells, cardinalities=None, tuple_column=False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for flat in cells:
            if tuple_column and cardinalities is not None:
                tup = core.flat_to_cell(int(flat), cardinalities)
                fh.write(f"{int(flat)},{':'.join(str(j) for j in tup)}\n")
            else:
                fh.write(f"{int(flat)}\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args, argv) -> int:
    t0 = time.perf_counter()
    if args.kind == "blobs":
        spec = datagen.BlobSpec(
            n=args.n,
            m=args.m,
            k=args.k,
            cluster_std=args.std,
            seed=args.seed,
        )
        data = datagen.gen_blobs(spec)
        config = {
            "kind": "blobs",
            "n": args.n,
            "m": args.m,
            "k": args.k,
            "cluster_std": args.std,
            "seed": args.seed,
        }
    else:
        cards = _parse_h(args.h)
        spec = datagen.KrStructSpec(
            cardinalities=cards,
            aggregator=args.agg,
            m=args.m,
            points_per_cluster=args.points_per_cluster,
            noise_std=args.noise_std,
            sampler=args.sampler,
            seed=args.seed,
        )
        data = datagen.gen_kr_structured(spec).dataset
        config = {
            "kind": "kr",
            "cardinalities": list(cards),
            "aggregator": args.agg,
            "m": args.m,
            "points_per_cluster": args.points_per_cluster,
            "noise_std": args.noise_std,
            "sampler": args.sampler,
            "seed": args.seed,
        }
    datagen.write_csv(data, args.output)
    print(f"wrote {data.n} points x {data.m} features to {args.output}")
    if args.report:
        report = _base_report(args, argv)
        report.update(
            {
                "config": config,
                "wall_time_ms": (time.perf_counter() - t0) * 1000.0,
                "outputs": {"dataset": str(args.output)},
            }
        )
        _write_report(report, args.report)
    return 0


def _load_input(args) -> tuple[np.ndarray, np.ndarray | None, dict]:
    data = datagen.read_csv(args.input, has_header=args.header, label_column=args.label_column)
    X = data.points
    info = {"standardize": bool(args.standardize)}
    if args.standardize:
        X, mean, std = datagen.standardize(X)
        info["feature_mean"] = [float(v) for v in mean]
        info["feature_std"] = [float(v) for v in std]
    return X, data.labels, info


def _cmd_fit(args, argv) -> int:
    t0 = time.perf_counter()
    X, truth, prep = _load_input(args)
    common = dict(
        init=args.init,
        n_restarts=args.restarts,
        max_iter=args.max_iter,
        tol=args.tol,
        random_state=args.seed,
    )
    if args.kmeans is not None and args.naive:
        raise ValueError("--kmeans and --naive are mutually exclusive")
    if args.kmeans is not None:
        model = baselines.LloydKMeans(n_clusters=args.kmeans, **common).fit(X)
        protosets = core.ProtoSets((model.cluster_centers_,), "sum")
        cards = (args.kmeans,)
        report_params = metrics.param_report(cards, X.shape[1], "lloyd")
        kind = "lloyd"
    elif args.naive:
        cards = _parse_h(args.h)
        model = baselines.NaiveKhatriRaoKMeans(cards, args.agg, **common).fit(X)
        protosets = model.protosets_
        report_params = metrics.param_report(cards, X.shape[1], "khatri_rao")
        kind = "naive"
    else:
        cards = _parse_h(args.h)
        model = krkmeans.KhatriRaoKMeans(cards, args.agg, storage=args.storage, **common).fit(X)
        protosets = model.protosets_
        report_params = metrics.param_report(cards, X.shape[1], "khatri_rao")
        kind = "khatri_rao"

    outputs = {}
    if args.output:
        krkmeans.save_model(protosets, args.output)
        outputs["model"] = str(args.output)
        assign_path = Path(args.output).with_suffix(".assignments.csv")
        _write_assignments(assign_path, model.labels_, cards, tuple_column=args.tuple_column)
        outputs["assignments"] = str(assign_path)

    inertia = float(model.inertia_)
    print(f"{kind}: inertia={inertia:.6g} vectors={report_params.vector_count}")
    label_scores = _label_metrics(model.labels_, truth) if truth is not None else None
    if label_scores is not None:
        print(
            "ari={ari:.4f} acc={acc:.4f} nmi={nmi:.4f} purity={purity:.4f}".format(
                **label_scores
            )
        )
    if args.report:
        report = _base_report(args, argv)
        report.update(
            {
                "config": {
                    "model": kind,
                    "cardinalities": list(cards),
                    "aggregator": args.agg if kind != "lloyd" else None,
                    "init": args.init,
                    "n_restarts": args.restarts,
                    "max_iter": args.max_iter,
                    "tol": args.tol,
                    "storage": args.storage if kind == "khatri_rao" else None,
                    **prep,
                },
                "wall_time_ms": (time.perf_counter() - t0) * 1000.0,
                "inertia": inertia,
                "metrics": label_scores,
                "param_report": {
                    "model_kind": report_params.model_kind,
                    "vector_count": report_params.vector_count,
                    "scalar_count": report_params.scalar_count,
                    "ratio_vs_full": report_params.ratio_vs_full,
                },
                "outputs": outputs,
            }
        )
        _write_report(report, args.report)
    return 0


def _cmd_eval(args, argv) -> int:
    t0 = time.perf_counter()
    predicted = datagen.read_labels(args.pred)
    truth = datagen.read_labels(args.truth)
    if predicted.shape[0] != truth.shape[0]:
        raise ValueError(
            f"label files disagree on length: {predicted.shape[0]} vs {truth.shape[0]}"
        )
    scores = _label_metrics(predicted, truth)
    print(
        "ari={ari:.6f} acc={acc:.6f} nmi={nmi:.6f} purity={purity:.6f}".format(**scores)
    )
    if args.report:
        report = _base_report(args, argv)
        report.update(
            {
                "config": {"pred": str(args.pred), "truth": str(args.truth)},
                "wall_time_ms": (time.perf_counter() - t0) * 1000.0,
                "metrics": scores,
                "outputs": {},
            }
        )
        _write_report(report, args.report)
    return 0


def _cmd_design(args, argv) -> int:
    chosen = [
        args.balanced_pair is not None,
        args.optimal_sets is not None,
        args.set_bounds is not None,
    ]
    if sum(chosen) != 1:
        raise ValueError(
            "choose exactly one of --balanced-pair, --optimal-sets, --set-bounds"
        )
    if args.balanced_pair is not None:
        pair = design.balanced_factor_pair(args.balanced_pair)
        print(f"{pair.h1} {pair.h2}")
        if pair.no_compression:
            print(
                f"note: {args.balanced_pair} has no non-trivial factorization; "
                "a protocentroid model saves nothing here",
                file=sys.stderr,
            )
    elif args.optimal_sets is not None:
        best = design.optimal_num_sets(args.optimal_sets)
        print(f"{best.p} {best.representable}")
    else:
        try:
            k_text, h_text = args.set_bounds.split(",")
            k, h_min = int(k_text), int(h_text)
        except ValueError:
            raise ValueError(f"--set-bounds expects K,H_MIN, got {args.set_bounds!r}")
        bounds = design.set_count_bounds(k, h_min)
        print(f"{bounds.lower:.6g} {bounds.upper}")
    return 0


def _cmd_quantize(args, argv) -> int:
    t0 = time.perf_counter()
    image = datagen.read_ppm(args.input)
    X = image.dataset.points
    common = dict(
        init=args.init,
        n_restarts=args.restarts,
        max_iter=args.max_iter,
        tol=args.tol,
        random_state=args.seed,
    )
    if args.model is not None:
        protosets = krkmeans.load_model(args.model)
        centers = core.materialize_centroids(protosets)
        labels, dmin = krkmeans.assign(X, protosets, storage="time")
        inertia = float(dmin.sum())
        cards = protosets.cardinalities
        report_params = metrics.param_report(cards, 3, "khatri_rao")
        kind = "precomputed"
    elif args.kmeans is not None:
        model = baselines.LloydKMeans(n_clusters=args.kmeans, **common).fit(X)
        cards = (args.kmeans,)
        report_params = metrics.param_report(cards, 3, "lloyd")
        kind = "lloyd"
        centers, labels, inertia = model.cluster_centers_, model.labels_, float(model.inertia_)
    else:
        cards = _parse_h(args.h)
        model = krkmeans.KhatriRaoKMeans(cards, args.agg, storage=args.storage, **common).fit(X)
        report_params = metrics.param_report(cards, 3, "khatri_rao")
        kind = "khatri_rao"
        centers, labels, inertia = model.cluster_centers_, model.labels_, float(model.inertia_)
    quantized = core.Dataset(points=centers[labels])
    datagen.write_ppm(quantized, image.width, image.height, args.output)
    print(
        f"{kind}: codebook vectors={report_params.vector_count} "
        f"({report_params.scalar_count} scalars), inertia={inertia:.6g}"
    )
    if args.report:
        report = _base_report(args, argv)
        report.update(
            {
                "config": {
                    "model": kind,
                    "cardinalities": list(cards),
                    "aggregator": args.agg if kind != "lloyd" else None,
                    "init": args.init,
                    "n_restarts": args.restarts,
                    "max_iter": args.max_iter,
                    "tol": args.tol,
                    "width": image.width,
                    "height": image.height,
                },
                "wall_time_ms": (time.perf_counter() - t0) * 1000.0,
                "inertia": inertia,
                "param_report": {
                    "model_kind": report_params.model_kind,
                    "vector_count": report_params.vector_count,
                    "scalar_count": report_params.scalar_count,
                    "ratio_vs_full": report_params.ratio_vs_full,
                },
                "outputs": {"image": str(args.output)},
            }
        )
        _write_report(report, args.report)
    return 0


def _cmd_fed(args, argv) -> int:
    t0 = time.perf_counter()
    X, _, _ = _load_input(args)
    if args.kmeans is not None:
        cfg = federated.FederatedConfig(
            n_clients=args.clients,
            rounds=args.rounds,
            model_kind="lloyd",
            k=args.kmeans,
            init=args.init,
            seed=args.seed,
        )
    else:
        cfg = federated.FederatedConfig(
            n_clients=args.clients,
            rounds=args.rounds,
            model_kind="khatri_rao",
            cardinalities=_parse_h(args.h),
            aggregator=args.agg,
            init=args.init,
            seed=args.seed,
        )
    result, ledger = federated.run_federated(X, cfg)
    outputs = {}
    if args.output:
        federated.write_ledger_csv(ledger, args.output)
        outputs["ledger"] = str(args.output)
    last = ledger.rows[-1]
    print(
        f"{cfg.model_kind}: rounds={cfg.rounds} clients={cfg.n_clients} "
        f"inertia={result.inertia:.6g} "
        f"downstream_per_round={last.server_to_clients_bytes}B "
        f"upstream_per_round={last.clients_to_server_bytes}B"
    )
    if args.report:
        report = _base_report(args, argv)
        report.update(
            {
                "config": {
                    "model": cfg.model_kind,
                    "clients": cfg.n_clients,
                    "rounds": cfg.rounds,
                    "cardinalities": list(cfg.cardinalities) if cfg.cardinalities else None,
                    "k": cfg.k,
                    "aggregator": cfg.aggregator if cfg.model_kind == "khatri_rao" else None,
                    "init": cfg.init,
                },
                "wall_time_ms": (time.perf_counter() - t0) * 1000.0,
                "inertia": result.inertia,
                "outputs": outputs,
            }
        )
        _write_report(report, args.report)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_fit_knobs(sub, storage=True):
    sub.add_argument("--restarts", type=int, default=20, help="independent restarts")
    sub.add_argument("--max-iter", type=int, default=200)
    sub.add_argument("--tol", type=float, default=1e-4)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--init", choices=("random", "plusplus"), default="random")
    if storage:
        sub.add_argument(
            "--storage",
            choices=("mem", "time"),
            default="mem",
            help="mem: centroids on the fly; time: cache the centroid matrix",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krclust",
        description="Clustering with centroids aggregated from protocentroid sets.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset as CSV")
    gen.add_argument("--kind", choices=("blobs", "kr"), required=True)
    gen.add_argument("--output", required=True)
    gen.add_argument("--n", type=int, default=1000, help="points (blobs)")
    gen.add_argument("--m", type=int, default=2, help="features")
    gen.add_argument("--k", type=int, default=10, help="clusters (blobs)")
    gen.add_argument("--std", type=float, default=1.0, help="cluster std (blobs)")
    gen.add_argument("--h", default="3,3", help="comma list of set sizes (kr)")
    gen.add_argument("--agg", choices=("sum", "product"), default="sum")
    gen.add_argument("--points-per-cluster", type=int, default=100)
    gen.add_argument("--noise-std", type=float, default=0.0)
    gen.add_argument(
        "--sampler", choices=("standard_normal", "uniform_positive"), default="standard_normal"
    )
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--report")
    gen.set_defaults(func=_cmd_gen)

    fit = sub.add_parser("fit", help="fit a clustering model to a CSV dataset")
    fit.add_argument("--input", required=True)
    fit.add_argument("--output", help="model document path; assignments go next to it")
    fit.add_argument("--h", default="2,2", help="comma list of set sizes")
    fit.add_argument("--agg", choices=("sum", "product"), default="sum")
    fit.add_argument("--kmeans", type=int, metavar="K", help="fit plain k-means instead")
    fit.add_argument("--naive", action="store_true", help="two-phase decompose-after baseline")
    fit.add_argument("--header", action="store_true", help="input has a header row")
    fit.add_argument("--label-column", type=int, help="ground-truth column index in the input")
    fit.add_argument("--standardize", action="store_true", help="z-score features first")
    fit.add_argument("--tuple-column", action="store_true", help="also write cell tuples")
    fit.add_argument("--report")
    _add_fit_knobs(fit)
    fit.set_defaults(func=_cmd_fit)

    ev = sub.add_parser("eval", help="compare two label files")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--report")
    ev.set_defaults(func=_cmd_eval)

    dsg = sub.add_parser("design", help="sizing calculators")
    dsg.add_argument("--balanced-pair", type=int, metavar="K")
    dsg.add_argument("--optimal-sets", type=int, metavar="B")
    dsg.add_argument("--set-bounds", metavar="K,H_MIN")
    dsg.set_defaults(func=_cmd_design)

    qnt = sub.add_parser("quantize", help="color-quantize a PPM image")
    qnt.add_argument("--input", required=True)
    qnt.add_argument("--output", required=True)
    qnt.add_argument("--h", default="6,6")
    qnt.add_argument("--agg", choices=("sum", "product"), default="product")
    qnt.add_argument("--kmeans", type=int, metavar="K")
    qnt.add_argument("--model", help="apply a saved model document instead of fitting")
    qnt.add_argument("--report")
    _add_fit_knobs(qnt)
    qnt.set_defaults(func=_cmd_quantize)

    fed = sub.add_parser("fed", help="simulate federated clustering rounds")
    fed.add_argument("--input", required=True)
    fed.add_argument("--output", help="communication ledger CSV path")
    fed.add_argument("--clients", type=int, default=10)
    fed.add_argument("--rounds", type=int, default=15)
    fed.add_argument("--h", default="10,10")
    fed.add_argument("--agg", choices=("sum", "product"), default="sum")
    fed.add_argument("--kmeans", type=int, metavar="K")
    fed.add_argument("--header", action="store_true")
    fed.add_argument("--label-column", type=int)
    fed.add_argument("--standardize", action="store_true")
    fed.add_argument("--seed", type=int, default=0)
    fed.add_argument("--init", choices=("random", "plusplus"), default="random")
    fed.add_argument("--report")
    fed.set_defaults(func=_cmd_fed)

    return parser


def dispatch(argv=None) -> int:
    """Run one subcommand: 0 on success, 1 on user error, 2 on internal error."""
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if hasattr(args, "storage"):
        args.storage = {"mem": "memory", "time": "time"}[args.storage]
    try:
        return args.func(args, argv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


main = dispatch


def entrypoint() -> None:
    sys.exit(dispatch())
