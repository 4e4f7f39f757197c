"""Command-line entry point.

Every subcommand is a thin wrapper: parse flags, read the declared input
files, delegate to a service or worker, write the declared outputs and
print a JSON summary on stdout. Failures are reported as one JSON error
object on stderr (see `vibe.core.errors.report_error`).

Global flags go before the subcommand:

    vibe --seed 3 --config train.cfg pipeline --dataset data.jsonl --run-dir runs/a
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from vibe.core.errors import DivergenceError, InvalidInputError, report_error
from vibe.core.logging import configure_logging
from vibe.core.settings import get_settings
from vibe.schemas.config import DriftSpec, TrainConfig, load_drift_spec, load_train_config
from vibe.schemas.documents import LabelMap, SplitSpec, TimedDocument, Vocabulary
from vibe.services.classify import (
    export_sphere_coordinates,
    predict_labels,
    pseudo_label,
    read_pseudo_labels,
    write_pseudo_labels,
    write_sphere_coordinates,
)
from vibe.services.corpus import (
    EncodedDocs,
    build_vocabulary,
    load_split,
    load_vocabulary,
    read_dataset,
    save_label_map,
    save_split,
    save_vocabulary,
    temporal_split,
    trainable,
)
from vibe.services.evaluation import (
    accuracy,
    past_only_baseline,
    run_report,
    write_plot_data,
    write_report,
)
from vibe.services.retrieval import pair_training_set, read_pairs, write_pairs
from vibe.services.synth import gen_corpus, write_corpus
from vibe.services.training import (
    build_pair_data,
    build_stage2_batch,
    init_model,
    objective_grad_check,
    train_stage1,
    train_stage2,
    write_history,
)
from vibe.topics.checkpoint import load_checkpoint, save_checkpoint
from vibe.topics.embedding import read_precomputed
from vibe.topics.model import top_topic_words
from vibe.topics.state import ModelState
from vibe.workers.benchmarks import accuracy_vs_n
from vibe.workers.pipeline import (
    encode_role,
    pipeline_report,
    run_pipeline,
    run_vocabulary,
    shift_diagnostics,
)

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], int]

_CONFIG_PREFIX = "cfg__"
_SPEC_PREFIX = "spec__"


def _emit(payload: dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, default=str) + "\n")


def _int_list(value: str) -> list[int]:
    return [int(item) for item in value.split(",") if item.strip()]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """One `--<key>` override per TrainConfig key; the seed is global."""
    group = parser.add_argument_group("training configuration overrides")
    for name, info in TrainConfig.model_fields.items():
        key = info.alias or name
        if key == "seed":
            continue
        group.add_argument(
            f"--{key.replace('_', '-')}",
            dest=f"{_CONFIG_PREFIX}{key}",
            default=None,
            metavar="VALUE",
        )


def _train_config(args: argparse.Namespace) -> TrainConfig:
    overrides = {
        key.removeprefix(_CONFIG_PREFIX): value
        for key, value in vars(args).items()
        if key.startswith(_CONFIG_PREFIX)
    }
    overrides["seed"] = args.seed
    return load_train_config(args.config, overrides)


def _load_docs(path: Path) -> tuple[list[TimedDocument], LabelMap]:
    return read_dataset(path)


def _attach_embeddings(state: ModelState, path: Path | None) -> None:
    if path is not None:
        state.provider.precomputed = read_precomputed(path, state.provider.dim)


def _roles(
    args: argparse.Namespace,
) -> tuple[list[TimedDocument], LabelMap, SplitSpec]:
    docs, label_map = _load_docs(args.dataset)
    return docs, label_map, load_split(args.split)


def _save_state(state: ModelState, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(state, path)


def _save_last_finite(exc: DivergenceError, out: Path) -> None:
    if isinstance(exc.last_state, ModelState):
        target = out.with_name(out.name + ".last-finite")
        _save_state(exc.last_state, target)
        logger.warning("Saved last finite state", extra={"path": str(target)})


def cmd_synth_gen(args: argparse.Namespace) -> int:
    overrides = {
        key.removeprefix(_SPEC_PREFIX): value
        for key, value in vars(args).items()
        if key.startswith(_SPEC_PREFIX)
    }
    overrides["seed"] = args.seed
    spec = load_drift_spec(args.spec, overrides)
    corpus = gen_corpus(spec)
    out: Path = args.out_dir
    count = write_corpus(corpus, out / "dataset.jsonl", out / "truth.jsonl")
    out.joinpath("labels.json").write_text(corpus.label_map.model_dump_json(), encoding="utf-8")
    _emit({"documents": count, "periods": spec.periods, "out_dir": str(out)})
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    config = _train_config(args)
    docs, _labels = _load_docs(args.dataset)
    split = temporal_split(docs, mode=args.mode, cut_points=args.cut_points, seed=config.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_split(split, args.out)
    _emit(
        {
            "train": len(split.train),
            "validation": len(split.validation),
            "golden_adaptive": len(split.golden_adaptive),
            "test": len(split.test),
        }
    )
    return 0


def _retrieval_roles(
    args: argparse.Namespace,
    max_vocab: int,
) -> tuple[list[TimedDocument], list[TimedDocument], Vocabulary]:
    """Training and pool documents from --train/--pool files or a dataset split."""
    if args.train is not None or args.pool is not None:
        if args.train is None or args.pool is None or args.dataset is not None:
            raise InvalidInputError("Pass --train with --pool, or --dataset with --split.")
        train, label_map = _load_docs(args.train)
        pool, _labels = read_dataset(args.pool, label_map)
        vocab = build_vocabulary([*train, *pool], max_size=max_vocab)
        return trainable(train, vocab), trainable(pool, vocab), vocab
    if args.dataset is None or args.split is None:
        raise InvalidInputError("Pass --dataset with --split, or --train with --pool.")
    docs, _labels, split = _roles(args)
    vocab = run_vocabulary(docs, split, max_vocab)
    by_id = {doc.id: doc for doc in docs}
    train = [by_id[doc_id] for doc_id in encode_role(docs, split.train, vocab).ids]
    pool = [by_id[doc_id] for doc_id in encode_role(docs, split.golden_adaptive, vocab).ids]
    return train, pool, vocab


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _train_config(args)
    shortcuts = {"retrieval_scheme": args.scheme, "retrieval_depth": args.n}
    overrides = {key: value for key, value in shortcuts.items() if value is not None}
    if overrides:
        config = config.with_overrides(**overrides)
    train, pool, vocab = _retrieval_roles(args, config.max_vocab)
    pairs = pair_training_set(
        train,
        pool,
        n=config.retrieval_depth,
        vocab=vocab,
        scheme=config.retrieval_scheme,
        seed=config.seed,
    )
    args.vocab_out.parent.mkdir(parents=True, exist_ok=True)
    save_vocabulary(vocab, args.vocab_out)
    write_pairs(pairs, args.out)
    _emit(
        {
            "pairs": len(pairs),
            "degenerate": sum(pair.degenerate for pair in pairs),
            "vocab_size": vocab.size,
        }
    )
    return 0


def cmd_train_stage1(args: argparse.Namespace) -> int:
    config = _train_config(args)
    docs, label_map, split = _roles(args)
    vocab = load_vocabulary(args.vocab)
    train = encode_role(docs, split.train, vocab)
    pool = encode_role(docs, split.golden_adaptive, vocab).without_labels()
    data = build_pair_data(read_pairs(args.pairs), train, pool)
    state = init_model(config, vocab.size, label_map.num_classes)
    _attach_embeddings(state, args.embeddings)
    try:
        result = train_stage1(data, config, state)
    except DivergenceError as exc:
        _save_last_finite(exc, args.out)
        raise
    _save_state(result.state, args.out)
    save_label_map(label_map, args.out.parent / "labels.json")
    if args.history is not None:
        write_history(result.history, args.history)
    final = result.history[-1].values if result.history else {}
    _emit({"pairs": data.size, "epochs": len(result.history), "final": final})
    return 0


def _load_state(args: argparse.Namespace) -> ModelState:
    state = load_checkpoint(args.checkpoint)
    _attach_embeddings(state, args.embeddings)
    return state


def cmd_pseudo_label(args: argparse.Namespace) -> int:
    docs, _labels, split = _roles(args)
    vocab = load_vocabulary(args.vocab)
    state = _load_state(args)
    adaptive = encode_role(docs, split.golden_adaptive, vocab).without_labels()
    labeled = pseudo_label(adaptive, state)
    write_pseudo_labels(labeled, args.out)
    _emit({"documents": len(labeled)})
    return 0


def cmd_train_stage2(args: argparse.Namespace) -> int:
    config = _train_config(args)
    docs, _labels, split = _roles(args)
    vocab = load_vocabulary(args.vocab)
    state = _load_state(args)
    train = encode_role(docs, split.train, vocab)
    adaptive = encode_role(docs, split.golden_adaptive, vocab).without_labels()
    pseudo = read_pseudo_labels(args.pseudo_labels)
    batch = build_stage2_batch(train, adaptive, pseudo, state.time_buckets)
    try:
        result = train_stage2(batch, config, state)
    except DivergenceError as exc:
        _save_last_finite(exc, args.out)
        raise
    _save_state(result.state, args.out)
    if args.history is not None:
        write_history(result.history, args.history)
    final = result.history[-1].values if result.history else {}
    _emit({"documents": len(batch.docs), "epochs": len(result.history), "final": final})
    return 0


def _scored_role(
    docs: list[TimedDocument],
    split: SplitSpec,
    vocab_path: Path,
    role: str = "test",
) -> EncodedDocs:
    ids = split.test if role == "test" else split.validation
    encoded = encode_role(docs, ids, load_vocabulary(vocab_path))
    if not encoded.labeled:
        raise InvalidInputError(f"Every {role} document must be labeled.")
    return encoded


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _train_config(args)
    docs, label_map, split = _roles(args)
    state = _load_state(args)
    scored = _scored_role(docs, split, args.vocab, args.role)
    predictions = predict_labels(scored, state, config.variant)
    report = run_report(predictions, scored.labels, state.classes, config=config)
    if args.out is not None:
        write_report(report, args.out)
    _emit(
        {
            "role": args.role,
            "documents": len(scored),
            "accuracy": report.accuracy,
            "per_class": [scores.model_dump() for scores in report.per_class],
            "labels": label_map.labels,
        }
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _train_config(args)
    docs, _labels, split = _roles(args)
    vocab = load_vocabulary(args.vocab)
    state = _load_state(args)
    test = _scored_role(docs, split, args.vocab)
    predictions = predict_labels(test, state, config.variant)
    train = encode_role(docs, split.train, vocab)
    baseline = past_only_baseline(train, config, classes=state.classes)
    overlaps, mmd_scores = shift_diagnostics(docs, split, vocab, state, seed=config.seed)
    report = run_report(
        predictions,
        test.labels,
        state.classes,
        config=config,
        mmd_scores=mmd_scores,
        vocab_overlaps=overlaps,
        baseline_accuracy=accuracy(baseline.predict(test), test.labels),
    )
    out: Path = args.out_dir
    write_report(report, out / "report.json")
    written = write_plot_data(report, out)
    if args.sphere_coordinates:
        rows = export_sphere_coordinates(train, ["past"] * len(train), state)
        rows += export_sphere_coordinates(test, ["future"] * len(test), state)
        write_sphere_coordinates(rows, out / "sphere_coordinates.csv")
    _emit(
        {
            "accuracy": report.accuracy,
            "baseline_accuracy": report.baseline_accuracy,
            "files": [str(path) for path in written],
        }
    )
    return 0


def cmd_grad_check(args: argparse.Namespace) -> int:
    report = objective_grad_check(
        seed=args.seed or 0,
        vocab_size=args.vocab_size,
        n_topics=args.n_topics,
        hidden=args.hidden,
        batch_size=args.batch,
        lambda_=args.lambda_,
        mu=args.mu,
        step=args.step,
        tol=args.tol,
        max_entries=args.max_entries,
    )
    _emit(
        {
            "passed": report.passed,
            "max_relative_error": report.max_relative_error,
            "checked": report.checked,
            "per_parameter": report.per_parameter,
        }
    )
    return 0 if report.passed else 1


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = _train_config(args)
    docs, label_map = _load_docs(args.dataset)
    classes = label_map.num_classes
    run_dir: Path = args.run_dir or get_settings().workspace_dir / "pipeline"
    run_dir.mkdir(parents=True, exist_ok=True)
    result = run_pipeline(
        docs,
        config,
        classes=classes,
        mode=args.mode,
        cut_points=args.cut_points,
        search=args.search,
        with_baseline=not args.no_baseline,
    )
    retrievers: dict[str, float] = {}
    if args.compare_retrievers:
        retrievers[result.config.retrieval_scheme] = result.accuracy
        other = "bm25" if result.config.retrieval_scheme == "tfidf" else "tfidf"
        rerun = run_pipeline(
            docs,
            result.config.with_overrides(retrieval_scheme=other),
            classes=classes,
            split=result.split,
            with_baseline=False,
        )
        retrievers[other] = rerun.accuracy
    curve = None
    if args.n_values:
        curve = accuracy_vs_n(
            docs,
            result.config,
            args.n_values,
            classes=classes,
            cut_points=args.cut_points if args.mode == "absolute" else None,
        )
    report = pipeline_report(docs, result, classes, retrievers, curve)

    save_split(result.split, run_dir / "split.json")
    save_vocabulary(result.vocab, run_dir / "vocab.json")
    save_label_map(label_map, run_dir / "labels.json")
    write_pairs(result.pairs, run_dir / "pairs.tsv")
    write_pseudo_labels(result.fit.pseudo_labels, run_dir / "pseudo_labels.tsv")
    _save_state(result.fit.state, run_dir / "model.ckpt")
    write_history(result.fit.history, run_dir / "history.csv")
    write_report(report, run_dir / "report.json")
    write_plot_data(report, run_dir)
    _emit(
        {
            "accuracy": result.accuracy,
            "baseline_accuracy": result.baseline_accuracy,
            "pairs": len(result.pairs),
            "run_dir": str(run_dir),
        }
    )
    return 0


def cmd_topics(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.checkpoint)
    vocab = load_vocabulary(args.vocab)
    topics = top_topic_words(state.model, vocab, side=args.side, latent=args.latent, n=args.n)
    for index, words in enumerate(topics):
        cells = " ".join(f"{word}:{prob:.4f}" for word, prob in words)
        sys.stdout.write(f"{index}\t{cells}\n")
    return 0


def _add_run_inputs(parser: argparse.ArgumentParser, pairs: bool = False) -> None:
    parser.add_argument("--dataset", type=Path, required=True)
    parser.add_argument("--split", type=Path, required=True)
    if pairs:
        parser.add_argument("--pairs", type=Path, required=True)


def _add_model_inputs(parser: argparse.ArgumentParser, checkpoint: bool = True) -> None:
    parser.add_argument("--vocab", type=Path, required=True)
    if checkpoint:
        parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument(
        "--embeddings",
        type=Path,
        default=None,
        help="Precomputed document embeddings (doc_id, e_1 .. e_E, tab-separated).",
    )


def _synth_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("synthetic corpus overrides")
    for name in DriftSpec.model_fields:
        if name == "seed":
            continue
        group.add_argument(
            f"--{name.replace('_', '-')}",
            dest=f"{_SPEC_PREFIX}{name}",
            default=None,
            metavar="VALUE",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibe",
        description="Disentangled topic models for temporally adaptive text classification.",
    )
    parser.add_argument("--seed", type=int, default=None, help="Seed for all randomness.")
    parser.add_argument("--config", type=Path, default=None, help="key=value config file.")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL.")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth-gen", help="Generate a synthetic evolving corpus.")
    synth.add_argument("--out-dir", type=Path, required=True)
    synth.add_argument("--spec", type=Path, default=None, help="key=value corpus spec file.")
    _synth_flags(synth)
    synth.set_defaults(handler=cmd_synth_gen)

    split = sub.add_parser("split", help="Temporal train/validation/adaptive/test split.")
    split.add_argument("--dataset", type=Path, required=True)
    split.add_argument("--out", type=Path, required=True)
    split.add_argument("--mode", choices=["relative", "absolute"], default="relative")
    split.add_argument("--cut-points", type=_int_list, default=None)
    split.set_defaults(handler=cmd_split)

    retrieve = sub.add_parser("retrieve", help="Pair training documents with adaptive ones.")
    retrieve.add_argument("--dataset", type=Path, default=None)
    retrieve.add_argument("--split", type=Path, default=None)
    retrieve.add_argument("--train", type=Path, default=None, help="Training documents (JSONL).")
    retrieve.add_argument("--pool", type=Path, default=None, help="Adaptive pool (JSONL).")
    retrieve.add_argument("--scheme", choices=("tfidf", "bm25"), default=None)
    retrieve.add_argument("--n", type=int, default=None, help="Pairs per training document.")
    retrieve.add_argument("--out", type=Path, required=True)
    retrieve.add_argument("--vocab-out", type=Path, required=True)
    _add_config_flags(retrieve)
    retrieve.set_defaults(handler=cmd_retrieve)

    stage1 = sub.add_parser("train-stage1", help="Warm-up and joint stage-1 training.")
    _add_run_inputs(stage1, pairs=True)
    _add_model_inputs(stage1, checkpoint=False)
    stage1.add_argument("--out", type=Path, required=True)
    stage1.add_argument("--history", type=Path, default=None)
    _add_config_flags(stage1)
    stage1.set_defaults(handler=cmd_train_stage1)

    pseudo = sub.add_parser("pseudo-label", help="Pseudo-label the adaptive documents.")
    _add_run_inputs(pseudo)
    _add_model_inputs(pseudo)
    pseudo.add_argument("--out", type=Path, required=True)
    pseudo.set_defaults(handler=cmd_pseudo_label)

    stage2 = sub.add_parser("train-stage2", help="Sphere-projection multi-task training.")
    _add_run_inputs(stage2)
    _add_model_inputs(stage2)
    stage2.add_argument("--pseudo-labels", type=Path, required=True)
    stage2.add_argument("--out", type=Path, required=True)
    stage2.add_argument("--history", type=Path, default=None)
    _add_config_flags(stage2)
    stage2.set_defaults(handler=cmd_train_stage2)

    evaluate = sub.add_parser("evaluate", help="Score a checkpoint on test or validation.")
    _add_run_inputs(evaluate)
    _add_model_inputs(evaluate)
    evaluate.add_argument("--role", choices=["test", "validation"], default="test")
    evaluate.add_argument("--out", type=Path, default=None)
    _add_config_flags(evaluate)
    evaluate.set_defaults(handler=cmd_evaluate)

    report = sub.add_parser("report", help="Full report with baseline and shift diagnostics.")
    _add_run_inputs(report)
    _add_model_inputs(report)
    report.add_argument("--out-dir", type=Path, required=True)
    report.add_argument("--sphere-coordinates", action="store_true")
    _add_config_flags(report)
    report.set_defaults(handler=cmd_report)

    grad = sub.add_parser("grad-check", help="Finite-difference check of the joint loss.")
    grad.add_argument("--vocab-size", type=int, default=30)
    grad.add_argument("--n-topics", type=int, default=4)
    grad.add_argument("--hidden", type=int, default=16)
    grad.add_argument("--batch", type=int, default=3)
    grad.add_argument("--lambda", dest="lambda_", type=float, default=1.0)
    grad.add_argument("--mu", type=float, default=1.0)
    grad.add_argument("--step", type=float, default=1e-4)
    grad.add_argument("--tol", type=float, default=1e-3)
    grad.add_argument("--max-entries", type=int, default=None)
    grad.set_defaults(handler=cmd_grad_check)

    pipeline = sub.add_parser("pipeline", help="Split, retrieve, train and evaluate in one run.")
    pipeline.add_argument("--dataset", type=Path, required=True)
    pipeline.add_argument("--run-dir", type=Path, default=None)
    pipeline.add_argument("--mode", choices=["relative", "absolute"], default="relative")
    pipeline.add_argument("--cut-points", type=_int_list, default=None)
    pipeline.add_argument("--search", action="store_true", help="Grid-search lambda/mu/lr.")
    pipeline.add_argument("--no-baseline", action="store_true")
    pipeline.add_argument("--compare-retrievers", action="store_true")
    pipeline.add_argument("--n-values", type=_int_list, default=None)
    _add_config_flags(pipeline)
    pipeline.set_defaults(handler=cmd_pipeline)

    topics = sub.add_parser("topics", help="Print the top words of every topic.")
    topics.add_argument("--checkpoint", type=Path, required=True)
    topics.add_argument("--vocab", type=Path, required=True)
    topics.add_argument("--side", choices=["past", "future"], default="past")
    topics.add_argument("--latent", choices=["variant", "shared"], default="shared")
    topics.add_argument("--n", type=int, default=10)
    topics.set_defaults(handler=cmd_topics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    if args.log_level:
        settings = settings.model_copy(update={"log_level": args.log_level.upper()})
    configure_logging(settings)
    handler: Handler = args.handler
    try:
        return handler(args)
    except Exception as exc:
        return report_error(exc)


if __name__ == "__main__":
    sys.exit(main())
