"""Command-line entry point: ``ontoloss <command> ...``.

Exit codes: 0 ok, 1 domain error, 2 I/O error, 3 training divergence,
4 gradient check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import datagen, gradcheck, metrics, model, ontology
from .losses import ConfigError, LossConfig, load_loss_config

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 1, 2, 3, 4

log = logging.getLogger("ontoloss")


class CLIError(Exception):
    def __init__(self, message: str, code: int = EXIT_DOMAIN):
        super().__init__(message)
        self.code = code


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {raw!r}")


def _config_epilog() -> str:
    lc, tc = LossConfig(), model.TrainConfig()
    return (
        "config file keys (key = value) and defaults: "
        f"tnorm={lc.tnorm.value}, variant={lc.variant.value}, k={lc.k:g}, epsilon={lc.epsilon:g}, "
        f"w_impl={lc.w_impl:g}, w_disj={lc.w_disj:g}, beta={lc.beta:g}, "
        f"max_epochs={tc.max_epochs}, learning_rate={tc.learning_rate:g}, batch_size={tc.batch_size}, "
        f"hidden={','.join(map(str, tc.hidden))}, semi_supervised={str(tc.semi_supervised).lower()}, "
        f"split={'/'.join(f'{r:g}' for r in tc.split)}; optimizer: Adamax"
    )


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_compile(args) -> int:
    graph = ontology.parse_ontology(args.edges, args.disjoint, args.annotated)
    labels = ontology.select_labels(graph, args.min_subclasses, count_self=args.count_self)
    cs = ontology.compile_constraints(graph, labels)
    ontology.write_constraints(cs, args.out)
    print(cs.summary())
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = datagen.SyntheticSpec(
        n_classes=args.classes, dag_density=args.density, n_disjoint_axioms=args.disjoint,
        n_samples=args.samples, feature_dim=args.feature_dim, label_noise=args.label_noise, seed=args.seed,
        noise=args.noise, inherit=args.inherit,
    )
    world, data = datagen.generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = world.graph.names
    (out / "edges.tsv").write_text(
        "".join(f"{names[c]}\t{names[p]}\n" for c, p in sorted(world.graph.subsumptions)), encoding="utf-8")
    (out / "disjoint.tsv").write_text(
        "".join(f"{names[a]}\t{names[b]}\n" for a, b in sorted(world.graph.disjointness)), encoding="utf-8")
    cs = world.constraints()
    ontology.write_constraints(cs, out / "constraints.txt")
    datagen.write_dataset(data, out / "dataset.txt")
    if args.fingerprints:
        fps = datagen.random_fingerprints(args.fingerprints, n_clusters=10, seed=args.seed)
        datagen.write_fingerprints(fps, out / "fingerprints.hex")
    print(f"{len(data)} samples, {cs.summary()}")
    return EXIT_OK


def cmd_subsample(args) -> int:
    fps = datagen.read_fingerprints(args.fingerprints)
    keep = datagen.diversity_subsample(fps, args.group_size, args.keep, args.seed)
    text = "".join(f"{i}\n" for i in keep)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"selected {len(keep)} of {len(fps)}", file=sys.stderr)
    return EXIT_OK


def _load_pair(data_path, constraints_path):
    data = datagen.read_dataset(data_path)
    cs = ontology.read_constraints(constraints_path)
    if data.n_labels != cs.universe_size:
        raise CLIError(f"dataset has {data.n_labels} labels but constraints cover {cs.universe_size}")
    return data, cs


def cmd_train(args) -> int:
    tc = model.load_train_config(args.config, seed=args.seed) if args.config else model.TrainConfig(seed=args.seed)
    data, cs = _load_pair(args.data, args.constraints)
    train_idx, val_idx, test_idx = datagen.split(len(data), tc.split, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metadata = {
        "data_path": str(Path(args.data).resolve()),
        "data_sha256": _sha256(args.data),
        "split": list(tc.split),
        "split_seed": args.seed,
        "semi_supervised": tc.semi_supervised,
        "loss": {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(tc.loss).items()
                 if k != "class_counts"},
    }
    try:
        best, epoch_log, opt = model.train(data.subset(train_idx), data.subset(val_idx), cs, tc)
    except model.TrainingDiverged as exc:
        model.write_log(exc.log, out / "train_log.jsonl")
        model.save_checkpoint(out / "model.json", exc.model, None, exc.epoch - 1, args.seed, metadata)
        print(f"training diverged in epoch {exc.epoch}; last finite epoch {exc.epoch - 1}", file=sys.stderr)
        return EXIT_DIVERGED
    best_rec = max(epoch_log, key=lambda r: (r.val_micro_f1, -r.epoch))
    model.write_log(epoch_log, out / "train_log.jsonl")
    model.save_checkpoint(out / "model.json", best, opt, best_rec.epoch, args.seed, metadata)
    print(f"best epoch {best_rec.epoch}: val micro-F1 {best_rec.val_micro_f1:.4f}; wrote {out}")
    return EXIT_OK


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def evaluation_record(mlp: model.MLP, data: datagen.Dataset, cs, threshold: float, t_max) -> dict:
    yhat = mlp.predict(data.features)
    counts = metrics.count_violations(cs, yhat, threshold)
    record = {
        "fnr_impl": metrics.fnr(counts, "impl"),
        "fnr_disj": metrics.fnr(counts, "disj"),
        "tp_impl": counts.tp_impl,
        "fn_impl": counts.fn_impl,
        "tp_disj": counts.tp_disj,
        "fn_disj": counts.fn_disj,
    }
    if data.labelled.any():
        scores = metrics.classification_scores(data.labels, yhat, threshold, data.labelled)
        record.update(micro_f1=scores.micro_f1, macro_f1=scores.macro_f1,
                      micro_auc=scores.micro_roc_auc, macro_auc=scores.macro_roc_auc)
    else:
        record.update(micro_f1=None, macro_f1=None, micro_auc=None, macro_auc=None)
    record.update(threshold=threshold, t_max=t_max)
    return record


def cmd_evaluate(args) -> int:
    data, cs = _load_pair(args.data, args.constraints)
    mlp, _, meta = model.load_checkpoint(args.model)
    if mlp.dims[-1] != cs.universe_size:
        raise CLIError(f"model predicts {mlp.dims[-1]} classes but constraints cover {cs.universe_size}")
    if mlp.dims[0] != data.feature_dim:
        raise CLIError(f"model expects {mlp.dims[0]} features, dataset has {data.feature_dim}")
    info = meta["metadata"]
    same_data = info.get("data_sha256") == _sha256(args.data)
    eval_data, scope = data, "all rows"
    train_split = None
    if same_data:
        train_idx, _, test_idx = datagen.split(len(data), info["split"], seed=info["split_seed"])
        eval_data, scope = data.subset(test_idx), "test split"
        train_split = data.subset(train_idx)
    elif args.threshold == "auto":
        source = info.get("data_path")
        if not source or not Path(source).exists() or _sha256(source) != info.get("data_sha256"):
            raise CLIError("threshold=auto needs the training data recorded in the checkpoint", EXIT_IO)
        train_data = datagen.read_dataset(source)
        train_idx, _, _ = datagen.split(len(train_data), info["split"], seed=info["split_seed"])
        train_split = train_data.subset(train_idx)

    t_max = None
    if train_split is not None and train_split.labelled.any():
        t_max = metrics.optimal_threshold(train_split.labels, mlp.predict(train_split.features),
                                          labelled=train_split.labelled)
    if args.threshold == "auto":
        threshold = t_max
    else:
        try:
            threshold = float(args.threshold)
        except ValueError:
            raise CLIError(f"threshold must be a number in (0, 1) or 'auto', got {args.threshold!r}") from None
        if not 0 < threshold < 1:
            raise CLIError("threshold must lie in (0, 1)")

    record = evaluation_record(mlp, eval_data, cs, threshold, t_max)
    print(f"evaluated {len(eval_data)} rows ({scope})")
    width = max(map(len, record))
    for key, value in record.items():
        print(f"{key:<{width}}  {_fmt(value)}")
    out = Path(args.out) if args.out else Path(args.model).with_name("metrics.jsonl")
    out.write_text(json.dumps(record) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_loss_config(args.config) if args.config else LossConfig()
    reports, boundary = gradcheck.run_gradcheck(cfg, trials=args.trials, seed=args.seed)
    failed = []
    for rep in reports:
        w = rep.worst
        status = "ok" if rep.passed else "FAIL"
        detail = "" if w is None else (
            f" worst rel. error {w.error:.3e} (trial {w.trial}, component {w.component}, "
            f"analytic {w.analytic:.10g}, numeric {w.numeric:.10g})")
        print(f"{rep.name:<12} {status:<4} {rep.trials} trials{detail}")
        if not rep.passed:
            failed.append(rep)
    print(f"balanced boundary gradient at (1, 0), k={boundary.k:g}, epsilon=0: "
          f"({boundary.d_antecedent!r}, {boundary.d_consequent!r}) "
          f"expected ({1 / boundary.k!r}, {-boundary.k!r}) {'ok' if boundary.passed else 'FAIL'}")
    if failed or not boundary.passed:
        if failed:
            worst = max(failed, key=lambda r: r.worst.error)
            print(f"worst offender: {worst.name} trial {worst.worst.trial} component {worst.worst.component} "
                  f"error {worst.worst.error:.3e}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="ontoloss", description="Ontology-constrained multi-label training.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile-constraints", formatter_class=fmt, help="close ontology axioms into a constraint file")
    p.add_argument("--edges", required=True, help="TSV child<TAB>parent")
    p.add_argument("--disjoint", help="TSV classA<TAB>classB")
    p.add_argument("--annotated", help="one annotated class name per line; every class when omitted")
    p.add_argument("--min-subclasses", type=int, default=100, help="annotated descendants needed to become a label")
    p.add_argument("--count-self", type=_bool, default=True, help="count an annotated class as its own descendant")
    p.add_argument("--out", required=True, help="constraint file to write")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("generate", formatter_class=fmt, help="synthetic ontology and dataset")
    p.add_argument("--classes", type=int, default=50, help="number of classes")
    p.add_argument("--density", type=float, default=0.08, help="subsumption edge probability")
    p.add_argument("--disjoint", type=int, default=8, help="number of direct disjointness axioms")
    p.add_argument("--samples", type=int, default=5000, help="number of rows")
    p.add_argument("--feature-dim", type=int, default=64, help="feature vector length")
    p.add_argument("--label-noise", type=float, default=0.0, help="per-bit label flip probability")
    p.add_argument("--noise", type=float, default=1.0, help="feature noise standard deviation")
    p.add_argument("--inherit", type=float, default=0.8, help="share of a prototype taken from its parents")
    p.add_argument("--fingerprints", type=int, default=0, help="also write this many random fingerprints")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("subsample", formatter_class=fmt, help="Tanimoto diversity selection")
    p.add_argument("--fingerprints", required=True, help="hex fingerprint file")
    p.add_argument("--group-size", type=int, default=10000, help="fingerprints per shuffled group")
    p.add_argument("--keep", type=int, default=2000, help="fingerprints kept per group")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", help="index file; stdout when omitted")
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("train", formatter_class=fmt, help="train the reference classifier", epilog=_config_epilog())
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--constraints", required=True, help="constraint file")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=0, help="seed for initialisation, shuffling and the split")
    p.add_argument("--out", required=True, help="output directory for model.json and train_log.jsonl")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", formatter_class=fmt, help="consistency and classification metrics")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--constraints", required=True, help="constraint file")
    p.add_argument("--model", required=True, help="checkpoint written by train")
    p.add_argument("--threshold", default="0.5", help="decision threshold or 'auto' (best train micro-F1)")
    p.add_argument("--out", help="metrics record file; metrics.jsonl next to the model when omitted")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", formatter_class=fmt, help="finite-difference audit of loss gradients",
                       epilog=_config_epilog())
    p.add_argument("--config", help="key = value loss config (k and epsilon used for the balanced variant)")
    p.add_argument("--trials", type=int, default=1000, help="random points per variant")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ontology.CycleError, ontology.InconsistentAxioms) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
