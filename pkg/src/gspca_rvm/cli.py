"""Command-line entry point: ``gspca-rvm <command> [flags]``.

Exit status is 0 on success, 2 on a usage error and 1 when the data or a
numerical routine fails. Outputs are written only after all work succeeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .dataset import (DataError, SyntheticSpec, generate_synthetic, load_table,
                      standardize, write_groups, write_table)
from .gspca import report_csv, report_text, selection_report
from .pipeline import (PersistenceError, atomic_write_text, compare_selectors,
                       evaluate, load_config, load_model, pipeline_to_dict, predict,
                       select_features, train)
from .rvm import DegenerateModelError, NumericalError
from .spca import ConvergenceError

RUNTIME_ERRORS = (DataError, PersistenceError, NumericalError, DegenerateModelError,
                  ConvergenceError, ValueError, OSError)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _write_all(outputs: dict) -> None:
    # stage everything, then rename; a failure leaves no partial outputs behind
    staged = []
    try:
        for path, text in outputs.items():
            path = Path(path)
            tmp = path.with_name(f".{path.name}.tmp")
            tmp.write_text(text, encoding="utf-8")
            staged.append((tmp, path))
    except OSError:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, path in staged:
        tmp.replace(path)


def _config(args):
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    return config


def cmd_gen(args) -> int:
    doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        doc["seed"] = args.seed
    spec = SyntheticSpec.from_dict(doc)
    table, groups, truth = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # the CSV writers need real files; write them under temp names then rename
    tmp_features, tmp_groups = out / ".features.csv.tmp", out / ".groups.csv.tmp"
    write_table(table, tmp_features, label_column="y")
    write_groups(groups, tmp_groups)
    truth_text = "feature,informative\n" + "".join(
        f"{f},{int(flag)}\n" for f, flag in zip(table.feature_names, truth))
    atomic_write_text(out / "truth.csv", truth_text)
    tmp_features.replace(out / "features.csv")
    tmp_groups.replace(out / "groups.csv")
    print(f"wrote {table.n} rows x {table.m} features in {len(groups.groups)} groups "
          f"({int(truth.sum())} informative) to {out}")
    return 0


def cmd_select(args) -> int:
    config = _config(args)
    table, groups = load_table(args.features, args.label, args.groups)
    std, _ = standardize(table)
    result = select_features(std, groups, config)
    rows = selection_report(result)
    if str(args.report_out).endswith(".csv"):
        text = report_csv(rows)
    else:
        text = _dumps({
            "method_tag": result.method_tag,
            "merged_features": list(result.merged_features),
            "groups": [{"group": r.group, "members": r.members, "selected": r.selected,
                        "fraction": r.fraction} for r in rows],
        })
    _write_all({args.report_out: text})
    print(report_text(rows))
    return 0


def _print_report(report, title=None):
    if title:
        print(title)
    d = report.to_dict()
    print(f"  n_test={d['n_test']} accuracy={d['accuracy']} type1={d['type1_error']} "
          f"type2={d['type2_error']} features={d['n_selected_features']} "
          f"relevance_vectors={d['n_relevance_vectors']}")


def cmd_train(args) -> int:
    config = _config(args)
    table, groups = load_table(args.features, args.label, args.groups)
    pipeline, report = train(table, groups, config)
    _write_all({
        args.model_out: _dumps(pipeline_to_dict(pipeline)),
        args.report_out: _dumps(report.to_dict()),
    })
    _print_report(report, "held-out evaluation:")
    return 0


def cmd_predict(args) -> int:
    pipeline = load_model(args.model)
    table, _ = load_table(args.features)
    proba, labels = predict(pipeline, table)
    lines = ["row_index,probability,label"]
    lines += [f"{i},{p:.9g},{lab}" for i, (p, lab) in enumerate(zip(proba, labels))]
    _write_all({args.out: "\n".join(lines) + "\n"})
    print(f"predicted {len(labels)} rows, {int(labels.sum())} flagged distressed")
    return 0


def cmd_evaluate(args) -> int:
    pipeline = load_model(args.model)
    table, _ = load_table(args.features, args.label)
    report = evaluate(pipeline, table)
    _write_all({args.report_out: _dumps(report.to_dict())})
    _print_report(report)
    return 0


def cmd_compare(args) -> int:
    config = _config(args)
    table, groups = load_table(args.features, args.label, args.groups)
    rows = compare_selectors(table, groups, config)
    _write_all({args.report_out: _dumps({"rows": [r.to_dict() for r in rows]})})
    for r in rows:
        _print_report(r.report, f"{r.selector} (groups touched: {r.groups_touched})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gspca-rvm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic grouped dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("select", help="run feature selection and report per group")
    p.add_argument("--features", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="train and evaluate on a held-out split")
    p.add_argument("--features", required=True)
    p.add_argument("--groups")
    p.add_argument("--label", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--report-out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a features file with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="evaluate a saved model on labeled data")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare gspca, spca_global and no selection")
    p.add_argument("--features", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--report-out", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)   # exits with status 2 on usage errors
    try:
        return args.func(args)
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
