"""Command-line pipeline: synth, ingest, featurize, train, evaluate, explain, plot.

Every subcommand reads and writes files in ``--out-dir`` under fixed
default names, so the stages chain without extra arguments::

    acadrisk --out-dir run synth --seed 0
    acadrisk --out-dir run featurize
    acadrisk --out-dir run train
    acadrisk --out-dir run evaluate
    acadrisk --out-dir run explain --sample S000-0007
    acadrisk --out-dir run plot
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .cohort import ingest_csv, load_cohort, save_cohort, write_csv
from .errors import AcadRiskError, DomainError, IngestionError, SchemaError, SingleClassError
from .evaluation import evaluate_protocol, save_json
from .linear import train_logistic
from .network import attach_centrality_features, layers_from_spec, layers_to_spec, synthesize, \
    write_edge_list
from .plots import (dependence_plot_data, save_bundle, summary_plot_data, summary_svg,
                    waterfall_data, waterfall_svg)
from .schema import NETWORK_FEATURES, default_schema, load_schema, save_schema
from .shapley import explain_rows, global_importance, load_explanations, save_explanations
from .synthetic import SynthSpec, generate, load_spec
from .trees import TrainConfig, load_model, save_model, train_gbdt

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_MISSING_FILE = 3
EXIT_SCHEMA = 4
EXIT_SINGLE_CLASS = 5
EXIT_DOMAIN = 6

FILES = {
    "csv": "cohort.csv",
    "layers": "layers.json",
    "truth": "truth.json",
    "spec": "synth_spec.json",
    "schema": "schema.json",
    "cohort": "cohort.json",
    "featurized": "cohort_featurized.json",
    "edges": "edges.csv",
    "model": "model.json",
    "eval": "eval.json",
    "roc": "roc.csv",
    "explanations": "explanations.json",
    "importance": "importance.csv",
}


def _path(args, key, override=None) -> Path:
    return Path(override) if override else Path(args.out_dir) / FILES[key]


def _require(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def _schema(args):
    return load_schema(_require(Path(args.schema))) if args.schema else default_schema()


def _config(args) -> TrainConfig:
    if not args.config:
        return TrainConfig(seed=args.seed)
    with open(_require(Path(args.config)), encoding="utf-8") as fh:
        d = json.load(fh)
    d.setdefault("seed", args.seed)
    return TrainConfig.from_dict(d)


def _training_cohort(args, override=None):
    """The featurized cohort if present, else the ingested one."""
    if override:
        return load_cohort(_require(Path(override)))
    featurized = _path(args, "featurized")
    return load_cohort(featurized if featurized.is_file() else _require(_path(args, "cohort")))


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# --- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    schema = _schema(args)
    spec = load_spec(_require(Path(args.spec)), schema) if args.spec else SynthSpec(schema=schema)
    overrides = {"seed": args.seed}
    if args.n_students:
        overrides["n_students"] = args.n_students
    spec = SynthSpec.from_dict(spec.to_dict() | overrides, schema)
    cohort, layers, truth = generate(spec)
    out = Path(args.out_dir)
    # the CSV carries no network columns: featurize derives them from the layers
    plain = cohort.with_columns({name: [float("nan")] * len(cohort) for name in NETWORK_FEATURES})
    with open(out / FILES["csv"], "w", encoding="utf-8", newline="") as fh:
        write_csv(plain, fh, gpa=truth.gpa)
    with open(out / FILES["csv"], encoding="utf-8") as fh:
        ingested = ingest_csv(fh, schema, cohort.cohort_tag)
    save_cohort(ingested, out / FILES["cohort"])
    save_json(layers_to_spec(layers, [1.0] * len(layers), cohort.ids), out / FILES["layers"])
    save_json(truth.to_dict(), out / FILES["truth"])
    save_json(spec.to_dict(), out / FILES["spec"])
    save_schema(schema, out / FILES["schema"])
    print(f"synthesized {len(cohort)} students, positive rate {truth.realized_positive_rate:.3f}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    schema = _schema(args)
    src = _require(_path(args, "csv", args.csv))
    with open(src, "rb") as fh:
        cohort = ingest_csv(fh, schema, args.tag or src.stem)
    save_cohort(cohort, _path(args, "cohort"))
    print(f"ingested {len(cohort)} rows, rejected {cohort.rejected_count}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    cohort = load_cohort(_require(_path(args, "cohort", args.cohort)))
    with open(_require(_path(args, "layers", args.layers)), encoding="utf-8") as fh:
        layer_spec = json.load(fh)
    layers, weights = layers_from_spec(layer_spec, cohort.ids)
    graph = synthesize(layers, weights, cohort.ids)
    featurized = attach_centrality_features(cohort, graph)
    save_cohort(featurized, _path(args, "featurized"))
    with open(_path(args, "edges"), "w", encoding="utf-8", newline="") as fh:
        write_edge_list(graph, fh)
    print(f"attached centralities for {graph.n} students over {len(layers)} layers")
    return EXIT_OK


def cmd_train(args) -> int:
    cohort = _training_cohort(args, args.cohort)
    if args.drop:
        cohort = cohort.without(args.drop)
    model = train_gbdt(cohort.X, cohort.y, _config(args), cohort.feature_names)
    save_model(model, _path(args, "model", args.model))
    print(f"trained {len(model.trees)} trees on {len(cohort)} rows, {model.feature_count} features")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cohort = _training_cohort(args, args.cohort)
    if args.drop:
        cohort = cohort.without(args.drop)
    config = _config(args)

    def fit_gbdt(train):
        return train_gbdt(train.X, train.y, config, train.feature_names)

    def fit_logistic(train):
        return train_logistic(train.X, train.y, seed=args.seed)

    result, reports = evaluate_protocol(cohort, fit_gbdt, args.runs, args.test_fraction,
                                        args.threshold, args.seed)
    baseline, _ = evaluate_protocol(cohort, fit_logistic, args.runs, args.test_fraction,
                                    args.threshold, args.seed)
    save_json({"gbdt": result, "logistic": baseline, "cohort_tag": cohort.cohort_tag},
              _path(args, "eval"))
    with open(_path(args, "roc"), "w", encoding="utf-8", newline="") as fh:
        reports[0][1].write_csv(fh)
    s = result["summary"]
    print(f"gbdt auc {s['auc']['mean']:.3f} +/- {s['auc']['sd']:.3f}, "
          f"logistic auc {baseline['summary']['auc']['mean']:.3f}")
    return EXIT_OK


def cmd_explain(args) -> int:
    cohort = _training_cohort(args, args.cohort)
    model = load_model(_require(_path(args, "model", args.model)))
    if list(model.feature_names) != cohort.feature_names:
        cohort = cohort.without([n for n in cohort.feature_names if n not in model.feature_names])
    if list(model.feature_names) != cohort.feature_names:
        raise SchemaError("model features do not match the cohort's features")
    explanations = explain_rows(model, cohort.X, cohort.ids)
    save_explanations(explanations, _path(args, "explanations"))
    importance = global_importance(explanations, cohort.feature_names)
    with open(_path(args, "importance"), "w", encoding="utf-8", newline="") as fh:
        importance.write_csv(fh)
    if args.sample:
        try:
            expl = explanations[cohort.index_of(args.sample)]
        except KeyError:
            raise DomainError(f"sample {args.sample!r} not in cohort") from None
        bundle = waterfall_data(expl, cohort, model)
        save_bundle(bundle, Path(args.out_dir) / f"waterfall_{args.sample}.json")
    print("top features: " + ", ".join(importance.top(min(8, len(importance.feature_names)))))
    return EXIT_OK


def cmd_plot(args) -> int:
    cohort = _training_cohort(args, args.cohort)
    model = load_model(_require(_path(args, "model", args.model)))
    explanations = load_explanations(_require(_path(args, "explanations")))
    names = list(explanations[0].feature_names) if explanations else []
    if names != cohort.feature_names:
        cohort = cohort.without([n for n in cohort.feature_names if n not in names])
    out = Path(args.out_dir)
    kinds = ("summary", "dependence", "waterfall") if args.kind == "all" else (args.kind,)
    if "summary" in kinds:
        importance = global_importance(explanations, names)
        bundle = summary_plot_data(importance, cohort, min(args.top_k, len(names)), model)
        save_bundle(bundle, out / "plot_summary.json")
        _write_text(out / "plot_summary.svg", summary_svg(bundle))
    if "dependence" in kinds:
        bundle = dependence_plot_data(args.feature, args.color, explanations, cohort, model)
        save_bundle(bundle, out / f"plot_dependence_{args.feature}.json")
    if "waterfall" in kinds:
        sample = args.sample or explanations[0].sample_id
        match = [e for e in explanations if str(e.sample_id) == str(sample)]
        if not match:
            raise DomainError(f"sample {sample!r} has no explanation")
        bundle = waterfall_data(match[0], cohort, model)
        save_bundle(bundle, out / f"plot_waterfall_{sample}.json")
        _write_text(out / f"plot_waterfall_{sample}.svg", waterfall_svg(bundle))
    print(f"wrote {', '.join(kinds)} plot data to {out}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--schema", help="schema JSON (default: built-in grade-group schema)")
    common.add_argument("--config", help="training config JSON (TrainConfig fields)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="directory for all inputs/outputs (default .)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="acadrisk", parents=[common],
                                     description="Academic-risk prediction pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort and layers")
    p.add_argument("--spec", help="SynthSpec JSON")
    p.add_argument("--n-students", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="validate a cohort CSV")
    p.add_argument("--csv", help=f"input CSV (default {FILES['csv']})")
    p.add_argument("--tag", help="cohort tag (default: file stem)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("featurize", parents=[common], help="attach network centralities")
    p.add_argument("--cohort")
    p.add_argument("--layers", help=f"layers JSON (default {FILES['layers']})")
    p.set_defaults(func=cmd_featurize)

    for name, func, help_ in (("train", cmd_train, "fit the boosted-tree model"),
                              ("evaluate", cmd_evaluate, "repeated stratified hold-out evaluation")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--cohort")
        p.add_argument("--drop", nargs="+", default=[], metavar="FEATURE",
                       help="prune these features before fitting")
        p.set_defaults(func=func)
        if name == "train":
            p.add_argument("--model")
        else:
            p.add_argument("--runs", type=int, default=5)
            p.add_argument("--test-fraction", type=float, default=0.25)
            p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("explain", parents=[common], help="per-sample attributions")
    p.add_argument("--cohort")
    p.add_argument("--model")
    p.add_argument("--sample", help="also write the waterfall for this student id")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("plot", parents=[common], help="plot data (JSON) and SVG")
    p.add_argument("--cohort")
    p.add_argument("--model")
    p.add_argument("--kind", choices=("summary", "dependence", "waterfall", "all"), default="all")
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--feature", default="EgnCnt")
    p.add_argument("--color", default="BtwnCnt")
    p.add_argument("--sample")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", 0)
    args.out_dir = getattr(args, "out_dir", ".")
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        return args.func(args)
    except FileNotFoundError as exc:
        code, msg = EXIT_MISSING_FILE, str(exc)
    except SingleClassError as exc:
        code, msg = EXIT_SINGLE_CLASS, str(exc)
    except (SchemaError, IngestionError) as exc:
        code, msg = EXIT_SCHEMA, str(exc)
    except (DomainError, AcadRiskError, ValueError) as exc:
        code, msg = EXIT_DOMAIN, str(exc)
    except Exception as exc:  # noqa: BLE001 - last-resort one-line diagnostic
        code, msg = EXIT_OTHER, f"{type(exc).__name__}: {exc}"
    print(f"acadrisk: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
