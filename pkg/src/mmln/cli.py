"""Command-line entry point ``mmln``.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import MMLNError, NumericalError
from .extraction import DEFAULT_THRESHOLD, build_evidence_db, load_emr_records, load_lexicon, load_scores
from .grounding import EvidenceDB, format_evidence, format_labels, parse_evidence, parse_labels
from .inference import InferenceConfig, format_marginals, infer_batch, marginals_json, parse_marginals
from .learning import LearnConfig, build_training_set, learn_weights
from .logic import DEFAULT_QUERY, format_model, load_model
from .pipeline.cohort import generate_cohort, load_cohort_config
from .pipeline.experiment import atomic_write, dump_json, run_experiment
from .pipeline.metrics import compute_metrics, roc_csv

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _with_label_cases(db: EvidenceDB, labels) -> EvidenceDB:
    # cases with no extracted evidence only show up in the label file
    return EvidenceDB(db.atoms, db.constants | set(labels), db.provenance)


def cmd_extract(args):
    lex = load_lexicon(args.lexicon)
    if args.model:
        lex.check_against(load_model(args.model, query=args.query))
    records = load_emr_records(args.emr) if args.emr else []
    scores = load_scores(args.scores) if args.scores else []
    db = build_evidence_db(records, scores, lex, args.threshold)
    atomic_write(args.output, format_evidence(db))


def cmd_learnwts(args):
    model = load_model(args.model, query=args.query)
    labels = parse_labels(_read(args.labels))
    db = _with_label_cases(parse_evidence(_read(args.evidence)), labels)
    cfg = LearnConfig(l2_sigma=args.l2_sigma, step=args.step, max_iters=args.max_iters,
                      grad_tol=args.grad_tol, seed=args.seed)
    result = learn_weights(model, build_training_set(model, db, labels, sorted(labels)), cfg)
    atomic_write(args.output, format_model(model.with_weights(result.weights)))
    if args.report:
        atomic_write(args.report, dump_json(result.report(cfg)))


def cmd_infer(args):
    model = load_model(args.model, query=args.query)
    db = parse_evidence(_read(args.evidence))
    if args.labels:
        db = _with_label_cases(db, parse_labels(_read(args.labels)))
    cfg = InferenceConfig(args.method, args.burn_in, args.samples, args.seed)
    results = infer_batch(model, None, db, db.cases(), cfg)
    atomic_write(args.output, format_marginals(results))
    if args.json:
        atomic_write(args.json, marginals_json(results))


def cmd_eval(args):
    probs = parse_marginals(_read(args.marginals))
    labels = parse_labels(_read(args.labels))
    missing = sorted(set(probs) - set(labels))
    if missing:
        raise MMLNError(f"no label for case(s) {missing[:5]}")
    report = compute_metrics([(probs[c], labels[c]) for c in sorted(probs)], args.threshold)
    atomic_write(args.output, dump_json(report.to_dict()))
    if args.roc:
        atomic_write(args.roc, roc_csv(report))


def cmd_synth(args):
    cfg, raw = load_cohort_config(args.config)
    if "model" not in raw:
        raise MMLNError("cohort config needs a generator 'model' file")
    model_path = Path(args.config).parent / raw["model"]
    db, labels = generate_cohort(load_model(model_path, query=args.query), cfg)
    evidence_out, labels_out = args.output
    atomic_write(evidence_out, format_evidence(db))
    atomic_write(labels_out, format_labels(labels, args.query))


def cmd_run(args):
    report = run_experiment(args.spec, args.output)
    for name, arm in report["arms"].items():
        m = arm["metrics"]
        print(f"{name}: accuracy={m['accuracy']:.3f} auc={m['auc']:.3f} f1={m['f1']:.3f} "
              f"precision={m['precision']:.3f} recall={m['recall']:.3f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmln", description="Markov logic diagnosis pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def query_opt(sp):
        sp.add_argument("--query", default=DEFAULT_QUERY, help="query predicate name")

    sp = sub.add_parser("extract", help="build an evidence database from EMRs and CXR scores")
    sp.add_argument("--emr", help="directory (or file) of JSON / JSON-lines EMR records")
    sp.add_argument("--scores", help="CSV patient_id,pathology,score")
    sp.add_argument("--lexicon", required=True)
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    sp.add_argument("--model", help="check lexicon targets against this rule file")
    query_opt(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_extract)

    defaults = LearnConfig()
    sp = sub.add_parser("learnwts", help="learn rule weights")
    sp.add_argument("--model", required=True)
    sp.add_argument("--evidence", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--l2-sigma", type=float, default=defaults.l2_sigma)
    sp.add_argument("--step", type=float, default=defaults.step)
    sp.add_argument("--max-iters", type=int, default=defaults.max_iters)
    sp.add_argument("--grad-tol", type=float, default=defaults.grad_tol)
    sp.add_argument("--seed", type=int, default=defaults.seed)
    sp.add_argument("--report", help="write learning diagnostics JSON here")
    query_opt(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_learnwts)

    sp = sub.add_parser("infer", help="marginal query probabilities per case")
    sp.add_argument("--model", required=True)
    sp.add_argument("--evidence", required=True)
    sp.add_argument("--labels", help="label file listing extra cases with no evidence")
    sp.add_argument("--method", choices=["exact", "gibbs"], default="exact")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=50000)
    sp.add_argument("--burn-in", type=int, default=1000)
    sp.add_argument("--json", help="also write results as a JSON array")
    query_opt(sp)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("eval", help="metrics for marginals against labels")
    sp.add_argument("--marginals", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--roc", help="write ROC points as CSV")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("synth", help="generate a synthetic cohort")
    sp.add_argument("--config", required=True)
    query_opt(sp)
    sp.add_argument("-o", "--output", nargs=2, metavar=("EVIDENCE", "LABELS"), required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("run", help="run an experiment file")
    sp.add_argument("--spec", required=True)
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"mmln: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MMLNError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"mmln: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
