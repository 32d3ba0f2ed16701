"""Command-line surface: one ``kpex`` entry point with one subcommand per
pipeline stage.

Configuration is a flat JSON object with dotted keys ("model.filters": 64).
Precedence: built-in defaults < config file (--config) < --set overrides <
dedicated flags (--seed). The merged config's SHA-256 digest is recorded in
every output (run directories, checkpoint metadata, sidecar .meta.json files
next to JSONL outputs) so any artifact can be traced to its exact settings.

Heavy imports happen inside handlers so --threads can cap BLAS thread pools
before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

DEFAULTS = {
    "seed": 0,
    "threads": 0,  # 0 = leave the BLAS thread pool alone
    "model.max_span_length": 5,
    "model.filters": 64,
    "model.heads": 2,
    "model.layers": 1,
    "model.dropout": 0.2,
    "model.no_transformer": False,
    "model.no_position": False,
    "model.no_visual": False,
    "embedding.token_dim": 64,
    "embedding.position_dim": 32,
    "embedding.source": "trainable",
    "embedding.min_count": 2,
    "embedding.frozen_vectors": None,
    "train.lr_start": 1e-3,
    "train.lr_end": 1e-4,
    "train.batch_size": 16,
    "train.max_epochs": 10,
    "train.validation_fraction": 0.1,
    "train.total_steps": None,
    "train.max_doc_length": 256,
    "predict.top_k": 10,
    "predict.chunk_len": 256,
    "predict.chunk_weight": 0.9,
}

ABLATIONS = ("no_transformer", "no_position", "no_visual")


class CliError(RuntimeError):
    pass


def load_run_config(config_path=None, overrides=(), seed=None, threads=None):
    """Merge defaults, config file, --set overrides, and dedicated flags."""
    merged = dict(DEFAULTS)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise CliError(f"config file not found: {config_path}")
        except json.JSONDecodeError as exc:
            raise CliError(
                f"{config_path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
            )
        if not isinstance(file_cfg, dict):
            raise CliError(f"{config_path}: config must be a JSON object")
        for key, value in file_cfg.items():
            if key not in merged:
                raise CliError(f"{config_path}: unknown config key {key!r}")
            merged[key] = value
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise CliError(f"--set needs key=value, got {item!r}")
        if key not in merged:
            raise CliError(f"--set: unknown config key {key!r}")
        try:
            merged[key] = json.loads(raw)
        except json.JSONDecodeError:
            merged[key] = raw  # bare strings are fine unquoted
    if seed is not None:
        merged["seed"] = seed
    if threads is not None:
        merged["threads"] = threads
    return merged


def config_digest(cfg):
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _apply_threads(cfg):
    n = int(cfg.get("threads") or 0)
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _model_config(cfg, ablate=()):
    from .embedding import EmbeddingConfig
    from .model import ModelConfig

    flags = {f"{name}": bool(cfg[f"model.{name}"]) for name in ABLATIONS}
    for name in ablate:
        if name not in ABLATIONS:
            raise CliError(
                f"unknown ablation {name!r}; choose from {', '.join(ABLATIONS)}"
            )
        flags[name] = True
    return ModelConfig(
        max_span_length=int(cfg["model.max_span_length"]),
        filters=int(cfg["model.filters"]),
        heads=int(cfg["model.heads"]),
        layers=int(cfg["model.layers"]),
        dropout=float(cfg["model.dropout"]),
        embedding=EmbeddingConfig(
            token_dim=int(cfg["embedding.token_dim"]),
            position_dim=int(cfg["embedding.position_dim"]),
            source=str(cfg["embedding.source"]),
            min_count=int(cfg["embedding.min_count"]),
        ),
        **flags,
    )


def _training_config(cfg):
    from .training import TrainingConfig

    total = cfg["train.total_steps"]
    return TrainingConfig(
        lr_start=float(cfg["train.lr_start"]),
        lr_end=float(cfg["train.lr_end"]),
        batch_size=int(cfg["train.batch_size"]),
        max_epochs=int(cfg["train.max_epochs"]),
        validation_fraction=float(cfg["train.validation_fraction"]),
        max_doc_length=int(cfg["train.max_doc_length"]),
        seed=int(cfg["seed"]),
        total_steps=int(total) if total else None,
    )


def _write_meta(out_path, cfg, command, extra=None):
    from .fileio import write_json

    meta = {
        "command": command,
        "config_digest": config_digest(cfg),
        "seed": cfg["seed"],
    }
    if extra:
        meta.update(extra)
    write_json(out_path + ".meta.json", meta)


def _resolve_checkpoint(path):
    for candidate in (path, path + ".ckpt"):
        if os.path.isfile(candidate):
            return candidate
    raise CliError(f"checkpoint not found: {path}")


def _load_frozen(cfg):
    from .embedding import FrozenVectors

    path = cfg["embedding.frozen_vectors"]
    if str(cfg["embedding.source"]) == "frozen":
        if not path:
            raise CliError("embedding.source=frozen needs embedding.frozen_vectors")
        return FrozenVectors.load(path, int(cfg["embedding.token_dim"]))
    return None


def _gold_from_dataset(path):
    from .documents import read_dataset

    items, _ = read_dataset(path, require_labels=True)
    return {item.document.id: list(item.keyphrases) for item in items}


# -- handlers ------------------------------------------------------------


def cmd_featurize(args, cfg):
    from .fileio import write_jsonl
    from .visual import LayoutError, load_layout_file

    names = sorted(n for n in os.listdir(args.layout_dir) if n.endswith(".json"))
    if not names:
        raise CliError(f"no .json layout files in {args.layout_dir}")
    lines = []
    skipped = []
    for name in names:
        path = os.path.join(args.layout_dir, name)
        doc_id = os.path.splitext(name)[0]
        text, rows = load_layout_file(path, doc_id)
        if not rows:
            skipped.append(doc_id)
            continue
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        line = {"id": doc_id, "text": text, "visual": rows}
        if raw.get("keyphrases"):
            line["keyphrases"] = [str(p) for p in raw["keyphrases"]]
        lines.append(line)
    if not lines:
        raise LayoutError("every layout produced an empty token sequence")
    write_jsonl(args.out, lines)
    _write_meta(args.out, cfg, "featurize", {"documents": len(lines), "skipped": skipped})
    print(f"featurized {len(lines)} documents -> {args.out}"
          + (f" ({len(skipped)} empty skipped)" if skipped else ""))
    return 0


def cmd_build_qp(args, cfg):
    from .documents import read_dataset
    from .fileio import read_jsonl, write_json, write_jsonl
    from .weaksup import build_qp_dataset, load_blocklist, read_query_log

    items, _ = read_dataset(args.docs)
    docs = [getattr(item, "document", item) for item in items]
    raw_by_id = {str(obj["id"]): obj for _, obj in read_jsonl(args.docs)}
    log = read_query_log(args.clicks)
    blocklist = load_blocklist(args.blocklist) if args.blocklist else None
    examples, stats = build_qp_dataset(
        docs,
        log,
        max_span_length=int(cfg["model.max_span_length"]),
        max_doc_length=int(cfg["train.max_doc_length"]),
        blocklist=blocklist,
    )
    if not examples:
        raise CliError("no documents survived query filtering")
    lines = []
    for ex in examples:
        raw = raw_by_id[ex.document.id]
        line = {"id": ex.document.id, "text": raw["text"]}
        if raw.get("visual") is not None:
            line["visual"] = raw["visual"]
        line["keyphrases"] = list(ex.queries)
        lines.append(line)
    write_jsonl(args.out, lines)
    report = stats.to_dict()
    report["config_digest"] = config_digest(cfg)
    write_json(args.out + ".stats.json", report)
    print(stats.as_table())
    print(f"wrote {len(lines)} query-prediction documents -> {args.out}")
    return 0


def _run_train(args, cfg, mode):
    from .documents import read_dataset, truncate
    from .embedding import TokenVocabulary
    from .model import SpanScorer
    from .training import prepare_examples, run_training

    items, ingest = read_dataset(args.data, require_labels=True)
    if not items:
        raise CliError(f"no labeled documents in {args.data}")
    train_cfg = _training_config(cfg)
    frozen = _load_frozen(cfg)
    if args.init:
        model, _ = SpanScorer.load(_resolve_checkpoint(args.init), frozen_vectors=frozen)
    else:
        model_cfg = _model_config(cfg, args.ablate)
        vocab = None
        if model_cfg.embedding.source == "trainable":
            vocab = TokenVocabulary.build(
                (truncate(it.document, train_cfg.max_doc_length) for it in items),
                min_count=model_cfg.embedding.min_count,
            )
        model = SpanScorer(model_cfg, vocab=vocab, frozen_vectors=frozen,
                           seed=int(cfg["seed"]))
    examples, prep = prepare_examples(
        items, model.config.max_span_length, train_cfg.max_doc_length
    )
    if ingest.skipped_empty or prep.skipped_no_match:
        print(
            f"skipped: {len(ingest.skipped_empty)} empty, "
            f"{len(prep.skipped_no_match)} with no matchable phrase",
            file=sys.stderr,
        )
    record = run_training(
        model,
        examples,
        train_cfg,
        run_dir=args.out,
        log=lambda s: print(
            f"epoch {s.epoch}: train {s.train_loss:.4f}"
            + (f" val {s.val_loss:.4f}" if s.val_loss is not None else "")
            + f" lr {s.lr_last:.2e} [{s.seconds:.1f}s]"
        ),
        checkpoint_metadata={"config_digest": config_digest(cfg), "mode": mode},
    )
    _write_meta(
        os.path.join(args.out, "run"),
        cfg,
        mode,
        {
            "best_epoch": record.best_epoch,
            "steps": record.steps,
            "examples": prep.prepared,
        },
    )
    print(f"{mode} finished: best epoch {record.best_epoch} "
          f"-> {os.path.join(args.out, 'best.ckpt')}")
    return 0


def cmd_pretrain(args, cfg):
    return _run_train(args, cfg, "pretrain")


def cmd_train(args, cfg):
    return _run_train(args, cfg, "train")


def cmd_predict(args, cfg):
    from .documents import read_dataset, truncate
    from .inference import chunk_and_merge, dedup_substrings, predict_topk, write_predictions
    from .model import SpanScorer

    model, _ = SpanScorer.load(_resolve_checkpoint(args.model),
                               frozen_vectors=_load_frozen(cfg))
    items, _ = read_dataset(args.data)
    top_k = args.top_k if args.top_k is not None else int(cfg["predict.top_k"])
    predictions = []
    for item in items:
        doc = getattr(item, "document", item)
        if args.chunked:
            pred = chunk_and_merge(
                model,
                doc,
                chunk_len=int(cfg["predict.chunk_len"]),
                chunk_weight=float(cfg["predict.chunk_weight"]),
            )
        else:
            clipped = truncate(doc, int(cfg["train.max_doc_length"]))
            pred = predict_topk(model.distribution(clipped), clipped,
                                k=model.expected_logit_count(len(clipped)))
        if args.dedup:
            pred = dedup_substrings(pred)
        predictions.append(type(pred)(pred.doc_id, pred.phrases[:top_k]))
    write_predictions(args.out, predictions)
    _write_meta(args.out, cfg, "predict",
                {"model": args.model, "documents": len(predictions),
                 "chunked": bool(args.chunked), "dedup": bool(args.dedup)})
    print(f"wrote predictions for {len(predictions)} documents -> {args.out}")
    return 0


def cmd_evaluate(args, cfg):
    from .fileio import write_json
    from .inference import read_predictions
    from .metrics import evaluate

    preds = {p.doc_id: p.phrase_list() for p in read_predictions(args.preds)}
    gold = _gold_from_dataset(args.gold)
    depths = tuple(int(d) for d in args.depths.split(","))
    f1_depths = tuple(int(d) for d in args.f1.split(",")) if args.f1 else ()
    report = evaluate(preds, gold, depths=depths, f1_depths=f1_depths,
                      stem=args.stem)
    print(report.as_table())
    if args.out:
        payload = report.to_dict()
        payload["config_digest"] = config_digest(cfg)
        write_json(args.out, payload)
    return 0


def cmd_baseline(args, cfg):
    from .baselines import CorpusStats, load_stopwords, textrank_rank, tfidf_rank
    from .documents import read_dataset, truncate
    from .inference import write_predictions

    items, _ = read_dataset(args.data)
    docs = [
        truncate(getattr(item, "document", item), int(cfg["train.max_doc_length"]))
        for item in items
    ]
    if not docs:
        raise CliError(f"no documents in {args.data}")
    stopwords = load_stopwords(args.stopwords) if args.stopwords else None
    kwargs = {"stopwords": stopwords} if stopwords else {}
    top_k = args.top_k if args.top_k is not None else int(cfg["predict.top_k"])
    max_len = int(cfg["model.max_span_length"])
    if args.method == "tfidf":
        stats = CorpusStats.build(docs)
        predictions = [
            tfidf_rank(d, stats, max_span_length=max_len, top_k=top_k, **kwargs)
            for d in docs
        ]
    else:
        predictions = [
            textrank_rank(d, max_span_length=max_len, top_k=top_k, **kwargs)
            for d in docs
        ]
    write_predictions(args.out, predictions)
    _write_meta(args.out, cfg, f"baseline:{args.method}",
                {"documents": len(predictions)})
    print(f"{args.method} predictions for {len(predictions)} documents -> {args.out}")
    return 0


def cmd_agreement(args, cfg):
    from .fileio import read_jsonl, write_json
    from .metrics import judge_agreement

    items = []
    for lineno, obj in read_jsonl(args.annotations):
        if "judges" not in obj:
            raise CliError(f"{args.annotations}:{lineno}: missing judges field")
        items.append([[str(p) for p in ranked] for ranked in obj["judges"]])
    report = judge_agreement(items, depth=args.depth, mode=args.mode)
    print(
        f"agreement@{args.depth} ({args.mode}): {report.percentage:.2f}% "
        f"over {report.pairs} judge pairs"
        + (f", {report.truncated_lists} truncated lists" if report.truncated_lists else "")
    )
    if args.out:
        write_json(args.out, {
            "depth": args.depth,
            "mode": args.mode,
            "percentage": report.percentage,
            "pairs": report.pairs,
            "truncated_lists": report.truncated_lists,
            "config_digest": config_digest(cfg),
        })
    return 0


def cmd_gradcheck(args, cfg):
    from .gradcheck import finite_difference_check
    from .model import SpanScorer
    from .synthetic import gradcheck_example
    from .embedding import TokenVocabulary
    from .training import TrainingExample, keyphrase_loss

    model_cfg = _model_config(cfg, args.ablate)
    if model_cfg.embedding.source != "trainable":
        raise CliError("gradcheck runs on the trainable-embedding configuration")
    doc, target = gradcheck_example(seed=int(cfg["seed"]))
    vocab = TokenVocabulary.build([doc], min_count=2)
    model = SpanScorer(model_cfg, vocab=vocab, seed=int(cfg["seed"]))
    example = TrainingExample(doc, target)
    errors = finite_difference_check(
        lambda: keyphrase_loss(model, example),
        model.registry,
        samples_per_param=args.samples,
        seed=int(cfg["seed"]),
    )
    for name in sorted(errors, key=errors.get, reverse=True):
        print(f"{errors[name]:.3e}  {name}")
    worst = max(errors.values())
    print(f"max rel err {worst:.3e} over {len(errors)} parameters")
    if worst < 1e-4:
        print("gradient check passed (threshold 1e-4)")
        return 0
    print("gradient check FAILED (threshold 1e-4)", file=sys.stderr)
    return 1


# -- parser wiring --------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kpex",
        description="Keyphrase extraction: span classification, weak "
                    "supervision, baselines, and evaluation.",
    )
    parser.add_argument("--config", help="JSON config file with flat dotted keys")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--seed", type=int, help="random seed (overrides config)")
    parser.add_argument("--threads", type=int,
                        help="cap BLAS threads (set before numpy loads)")
    parser.add_argument("--show-config", action="store_true",
                        help="print the merged configuration and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("featurize", help="layout JSON directory -> dataset JSONL")
    p.add_argument("--layout-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_featurize)

    p = sub.add_parser("build-qp", help="join documents with click queries")
    p.add_argument("--docs", required=True)
    p.add_argument("--clicks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--blocklist", help="file of queries to drop, one per line")
    p.set_defaults(handler=cmd_build_qp)

    for name, handler in (("pretrain", cmd_pretrain), ("train", cmd_train)):
        p = sub.add_parser(name, help=f"{name} the span classifier")
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--init", help="warm-start checkpoint (e.g. run/best)")
        p.add_argument("--ablate", type=_ablate_list, default=[],
                       help="comma list: " + ",".join(ABLATIONS))
        p.set_defaults(handler=handler)

    p = sub.add_parser("predict", help="rank keyphrases for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chunked", action="store_true",
                   help="score long documents in decaying-weight chunks")
    p.add_argument("--dedup", action="store_true",
                   help="drop substrings of top-quarter phrases")
    p.add_argument("--top-k", type=int)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("evaluate", help="precision/recall against gold labels")
    p.add_argument("--preds", required=True)
    p.add_argument("--gold", required=True, help="dataset JSONL with keyphrases")
    p.add_argument("--depths", default="1,3,5")
    p.add_argument("--f1", default="10", help="comma list of F1 depths ('' to skip)")
    p.add_argument("--stem", action="store_true")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("baseline", help="unsupervised reference systems")
    p.add_argument("--method", required=True, choices=("tfidf", "textrank"))
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int)
    p.add_argument("--stopwords", help="custom stopword list file")
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("agreement", help="inter-judge agreement")
    p.add_argument("--annotations", required=True,
                   help='JSONL of {"id", "judges": [[phrase,...],...]}')
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--mode", choices=("exact", "unigram"), default="exact")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_agreement)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--samples", type=int, default=16,
                   help="coordinates checked per parameter (default 16)")
    p.add_argument("--ablate", type=_ablate_list, default=[])
    p.set_defaults(handler=cmd_gradcheck)

    return parser


def _ablate_list(raw):
    return [part.strip() for part in raw.split(",") if part.strip()]


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.set, args.seed, args.threads)
        if args.show_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            print(f"digest: {config_digest(cfg)}")
            return 0
        if not args.command:
            parser.print_help()
            return 2
        _apply_threads(cfg)
        return args.handler(args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
