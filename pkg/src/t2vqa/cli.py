"""Command-line entry point.

One subcommand per workflow stage.  Exit codes: 0 success, 1 validation
error (bad flags or bad input data), 2 runtime failure.  Every run
writes a run.json echoing the fully resolved configuration (no
timestamps, so reruns are byte-identical).  T2VQA_SEED supplies the
default seed; T2VQA_DATA anchors relative frame paths.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .manifest import (
    ManifestError,
    PromptRecord,
    RatingRecord,
    load_manifest,
    load_ratings_csv,
    load_records,
    load_split_plan,
    parse_records,
    save_manifest,
    save_records,
    save_split_plan,
    MosRecord,
)
from .mos import DegenerateAnnotatorError, NoValidRatingsError, compute_mosz
from .prompts import (
    ClusteringError,
    EmbeddingError,
    HashedBagOfWords,
    UndersizedGroupError,
    cluster_prompts,
    embed_prompts,
    sample_per_group,
)
from .evaluation import (
    BrightnessScorer,
    CheckpointScorer,
    MissingMosError,
    MosOracleScorer,
    RandomScorer,
    evaluate,
    make_splits,
    save_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

VALIDATION_ERRORS = (
    ManifestError, ValueError, KeyError, FileNotFoundError,
    NotADirectoryError, IsADirectoryError, MissingMosError,
    DegenerateAnnotatorError, NoValidRatingsError, UndersizedGroupError,
    EmbeddingError, ClusteringError, json.JSONDecodeError,
)


def _env_seed() -> int:
    raw = os.environ.get("T2VQA_SEED", "0")
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"T2VQA_SEED must be an integer, got {raw!r}") from exc


def _write_run_json(out_dir: str, payload: dict) -> None:
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    body = json.dumps(payload, indent=2, sort_keys=True, default=str)
    (directory / "run.json").write_text(body + "\n", encoding="utf-8")


def _resolved(args: argparse.Namespace, **extra) -> dict:
    skip = {"func"}
    config = {k: v for k, v in vars(args).items() if k not in skip}
    config.update(extra)
    return {"subcommand": args.subcommand, "config": config}


def _load_manifest_with_mos(manifest_path: str, mos_path: str | None):
    manifest = load_manifest(manifest_path)
    if mos_path:
        mos_records = [r for r in load_records(mos_path)
                       if isinstance(r, MosRecord)]
        if not mos_records:
            raise ValueError(f"no MOS records found in {mos_path}")
        manifest = manifest.with_mos(mos_records)
    return manifest


# ---------------------------------------------------------------- prompts

def _cmd_select_prompts(args: argparse.Namespace) -> int:
    _write_run_json(args.out_dir, _resolved(args))
    if args.manifest:
        manifest = load_manifest(args.manifest)
        prompts = [(p.prompt_id, p.text) for p in manifest.prompts.values()]
        records = dict(manifest.prompts)
    else:
        lines = [ln.strip() for ln in
                 Path(args.prompts).read_text(encoding="utf-8").splitlines()]
        texts = [ln for ln in lines if ln]
        if not texts:
            raise ValueError(f"no prompts found in {args.prompts}")
        prompts = [(f"p{i:05d}", text) for i, text in enumerate(texts)]
        records = {pid: PromptRecord(prompt_id=pid, text=text)
                   for pid, text in prompts}
    emb = embed_prompts(prompts, embedder=HashedBagOfWords(dim=args.embed_dim))
    assignment = cluster_prompts(emb, k=args.k, seed=args.seed)
    chosen = sample_per_group(assignment, m=args.per_group, seed=args.seed)
    selected = []
    for pid in chosen:
        base = records[pid]
        selected.append(PromptRecord(
            prompt_id=base.prompt_id, text=base.text, category=base.category,
            group_id=assignment.groups[pid]))
    save_records(selected, args.out)
    print(f"selected {len(selected)} prompts "
          f"({args.k} groups x {args.per_group}) -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- ratings

def _load_rating_file(path: str) -> list[RatingRecord]:
    if path.endswith(".csv"):
        return load_ratings_csv(path)
    # header optional: the service store is an append-only fragment
    with open(path, encoding="utf-8") as fh:
        records = parse_records(fh, require_header=False)
    ratings = [r for r in records if isinstance(r, RatingRecord)]
    if not ratings:
        raise ValueError(f"no rating records found in {path}")
    return ratings


def _cmd_ingest_ratings(args: argparse.Namespace) -> int:
    _write_run_json(args.out_dir, _resolved(args))
    manifest = load_manifest(args.manifest)
    new_ratings = _load_rating_file(args.ratings)
    merged = manifest.with_ratings(new_ratings)
    save_manifest(merged, args.out)
    print(f"ingested {len(new_ratings)} ratings "
          f"({len(merged.ratings)} total) -> {args.out}")
    return EXIT_OK


def _cmd_compute_mos(args: argparse.Namespace) -> int:
    _write_run_json(args.out_dir, _resolved(args))
    manifest = load_manifest(args.manifest)
    extra = _load_rating_file(args.ratings) if args.ratings else []
    ratings = list(manifest.ratings) + extra
    if not ratings:
        raise ValueError("no ratings available; nothing to aggregate")
    mos_records = compute_mosz(ratings, policy=args.policy)
    save_records(mos_records, args.out)
    print(f"wrote {len(mos_records)} MOS records -> {args.out}")
    if args.merged_out:
        merged = manifest
        if extra:
            merged = merged.with_ratings(extra)
        merged = merged.with_mos(mos_records)
        save_manifest(merged, args.merged_out)
        print(f"wrote merged manifest -> {args.merged_out}")
    return EXIT_OK


# ---------------------------------------------------------------- service

def _cmd_serve(args: argparse.Namespace) -> int:
    _write_run_json(args.out_dir, _resolved(args))
    import uvicorn

    from .service import create_app

    manifest = load_manifest(args.manifest)
    app = create_app(manifest, args.store, manifest_path=args.manifest,
                     ui_dir=args.ui)
    print(f"serving {len(manifest.videos)} videos on "
          f"http://{args.host}:{args.port} (store: {args.store})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------- protocol

def _cmd_split(args: argparse.Namespace) -> int:
    _write_run_json(args.out_dir, _resolved(args))
    manifest = load_manifest(args.manifest)
    plan = make_splits(manifest, n_folds=args.folds,
                       test_fraction=args.test_frac, seed=args.seed,
                       split_by=args.split_by)
    save_split_plan(plan, args.out)
    fold = plan.folds[0]
    print(f"wrote {len(plan.folds)} folds "
          f"({len(fold.train_video_ids)} train / {len(fold.test_video_ids)} test) "
          f"-> {args.out}")
    return EXIT_OK


def _merge_section(defaults: dict, *layers: dict) -> dict:
    merged = dict(defaults)
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})
    return merged


def _cmd_train(args: argparse.Namespace) -> int:
    from .model import ModelConfig, Network, save_checkpoint
    from .training import TrainConfig, build_samples, train

    overrides = {"model": {}, "train": {}}
    if args.config:
        loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(loaded) - {"model", "train"}
        if unknown:
            raise ValueError(
                f"config file sections must be 'model'/'train', got {sorted(unknown)}")
        overrides["model"].update(loaded.get("model", {}))
        overrides["train"].update(loaded.get("train", {}))

    seed = args.seed if args.seed is not None else (
        overrides["train"].get("seed", _env_seed()))
    flag_layer = {
        "learning_rate": args.learning_rate,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "loss_lambda": args.loss_lambda,
        "plcc_eps": args.plcc_eps,
        "seed": seed,
    }
    train_cfg = TrainConfig.from_dict(
        _merge_section(TrainConfig().to_dict(), overrides["train"], flag_layer))
    model_dict = _merge_section(
        ModelConfig().to_dict(), overrides["model"],
        {"seed": seed if "seed" not in overrides["model"] else None})
    model_cfg = ModelConfig.from_dict(model_dict)

    _write_run_json(args.out_dir, _resolved(
        args, model=model_cfg.to_dict(), train=train_cfg.to_dict()))

    manifest = _load_manifest_with_mos(args.manifest, args.mos)
    plan = load_split_plan(args.splits)
    if not 0 <= args.fold < len(plan.folds):
        raise ValueError(
            f"--fold must be in [0, {len(plan.folds) - 1}], got {args.fold}")
    fold = plan.folds[args.fold]
    network = Network(model_cfg)
    train_samples = build_samples(
        network, manifest, fold.train_video_ids, args.manifest)
    val_samples = build_samples(
        network, manifest, fold.test_video_ids, args.manifest)
    result = train(network, train_samples, train_cfg,
                   val_samples=val_samples, log_path=args.log)
    save_checkpoint(network, args.checkpoint_out)
    last_val = result.val_history[-1] if result.val_history else {}
    print(f"trained {result.steps} steps over {result.epochs} epochs; "
          f"final loss {result.final_loss:.6f}; "
          f"val srocc {last_val.get('val_srocc')}; "
          f"checkpoint -> {args.checkpoint_out}")
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    from .model import load_checkpoint, load_frame_files, sample_frames

    _write_run_json(args.out_dir, _resolved(args))
    network = load_checkpoint(args.checkpoint)
    cfg = network.config
    if args.text is not None:
        if not args.frames_dir:
            raise ValueError("--text needs --frames-dir")
        files = load_frame_files(args.frames_dir)
        frames = sample_frames(args.frames_dir, len(files),
                               cfg.n_frames, cfg.frame_size)
        score = network.predict(args.text, frames)
        print(json.dumps({"score": score.value}, sort_keys=True))
        return EXIT_OK

    if not args.manifest:
        raise ValueError("predict needs --manifest or --text/--frames-dir")
    manifest = load_manifest(args.manifest)
    scorer = CheckpointScorer(args.checkpoint, manifest_path=args.manifest,
                              network=network)
    if args.video_id:
        if args.video_id not in manifest.videos:
            raise ValueError(f"unknown video {args.video_id!r}")
        video = manifest.videos[args.video_id]
        text = manifest.prompts[video.prompt_id].text
        value = scorer.score(text, video)
        print(json.dumps({"score": value, "video_id": args.video_id},
                         sort_keys=True))
        return EXIT_OK
    rows = []
    for vid, video in manifest.videos.items():
        text = manifest.prompts[video.prompt_id].text
        rows.append((vid, scorer.score(text, video)))
    if args.predictions_out:
        with open(args.predictions_out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["video_id", "pred"])
            for vid, value in rows:
                writer.writerow([vid, repr(value)])
        print(f"wrote {len(rows)} predictions -> {args.predictions_out}")
    else:
        for vid, value in rows:
            print(f"{vid},{value!r}")
    return EXIT_OK


def _build_scorer(spec: str, manifest, manifest_path: str):
    kind, _, arg = spec.partition(":")
    if kind == "mos-oracle":
        return MosOracleScorer(manifest)
    if kind == "random":
        return RandomScorer(seed=int(arg) if arg else 0)
    if kind == "brightness":
        return BrightnessScorer(manifest_path=manifest_path)
    if kind == "checkpoint":
        if not arg:
            raise ValueError("checkpoint scorer needs a path: checkpoint:PATH")
        return CheckpointScorer(arg, manifest_path=manifest_path)
    raise ValueError(
        f"unknown scorer {spec!r}; expected mos-oracle, random[:SEED], "
        f"brightness, or checkpoint:PATH")


def _cmd_evaluate(args: argparse.Namespace) -> int:
    _write_run_json(args.out_dir, _resolved(args))
    manifest = _load_manifest_with_mos(args.manifest, args.mos)
    plan = load_split_plan(args.splits)
    scorer = _build_scorer(args.scorer, manifest, args.manifest)
    report = evaluate(scorer, manifest, plan)
    save_report(report, args.out)
    for metric, stats in sorted(report.aggregate.items()):
        print(f"{metric}: {stats['mean']:.4f} +/- {stats['std']:.4f}")
    print(f"report -> {args.out}")
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    from .analysis import (
        analyze,
        category_table_csv,
        generator_table_csv,
        quartic_fit,
        render_scatter_png,
        save_quartic_json,
        save_scatter_csv,
        scatter_rows,
    )

    _write_run_json(args.out_dir, _resolved(args))
    manifest = _load_manifest_with_mos(args.manifest, args.mos)
    report = analyze(manifest)
    out = Path(args.out_dir)
    (out / "generators.csv").write_text(
        generator_table_csv(report), encoding="utf-8")
    (out / "categories.csv").write_text(
        category_table_csv(report), encoding="utf-8")
    (out / "analysis.json").write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    print(f"best generator: {report.best_generator}")
    print(f"tables -> {out / 'generators.csv'}, {out / 'categories.csv'}")
    if args.predictions:
        predictions = {}
        with open(args.predictions, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["video_id", "pred"]:
                raise ValueError(
                    f"predictions csv must start with 'video_id,pred', got {header}")
            for row in reader:
                predictions[row[0]] = float(row[1])
        rows = scatter_rows(predictions, manifest)
        coeffs = quartic_fit([r[1] for r in rows], [r[2] for r in rows])
        save_scatter_csv(rows, out / "scatter.csv")
        save_quartic_json(coeffs, out / "quartic.json")
        print(f"scatter -> {out / 'scatter.csv'} (+ quartic.json)")
        if args.plot:
            render_scatter_png(rows, coeffs, out / "scatter.png")
            print(f"plot -> {out / 'scatter.png'}")
    return EXIT_OK


def _cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import run_selftest

    _write_run_json(args.out_dir, _resolved(args))
    failures = run_selftest(seed=args.seed)
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_VALIDATION
    print("all checks passed")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser(default_seed: int) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="t2vqa",
        description="text-to-video quality assessment workbench")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser, seed: bool = True) -> None:
        p.add_argument("--out-dir", default=".",
                       help="directory for run.json and table outputs")
        if seed:
            p.add_argument("--seed", type=int, default=default_seed,
                           help="random seed (default: T2VQA_SEED or 0)")

    p = sub.add_parser("select-prompts",
                       help="cluster prompts and sample a balanced subset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompts", help="text file, one prompt per line")
    src.add_argument("--manifest", help="manifest whose prompts to cluster")
    p.add_argument("--k", type=int, default=100, help="number of groups")
    p.add_argument("--per-group", type=int, default=10,
                   help="prompts sampled per group")
    p.add_argument("--embed-dim", type=int, default=384)
    p.add_argument("--out", required=True, help="selected prompt records (jsonl)")
    common(p)
    p.set_defaults(func=_cmd_select_prompts)

    p = sub.add_parser("ingest-ratings",
                       help="merge a ratings file into a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratings", required=True, help="csv or jsonl ratings")
    p.add_argument("--out", required=True, help="merged manifest path")
    common(p, seed=False)
    p.set_defaults(func=_cmd_ingest_ratings)

    p = sub.add_parser("compute-mos", help="aggregate ratings into MOS records")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratings", help="extra ratings file (csv or jsonl)")
    p.add_argument("--out", required=True, help="MOS records output (jsonl)")
    p.add_argument("--merged-out", help="also write manifest incl. MOS")
    p.add_argument("--policy", choices=("exclude", "abort"), default="exclude",
                   help="degenerate-annotator handling")
    common(p, seed=False)
    p.set_defaults(func=_cmd_compute_mos)

    p = sub.add_parser("serve", help="run the rating-collection service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", required=True, help="ratings store (jsonl, appended)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static UI directory to mount at /")
    common(p, seed=False)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("split", help="write a cross-validation split plan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--split-by", choices=("video", "prompt"), default="video")
    p.add_argument("--out", required=True, help="split plan path (json)")
    common(p)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train the scoring model on one fold")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mos", help="MOS records file if manifest lacks them")
    p.add_argument("--splits", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--config", help="json overrides: {'model': {}, 'train': {}}")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--loss-lambda", type=float, default=None)
    p.add_argument("--plcc-eps", type=float, default=None)
    p.add_argument("--checkpoint-out", required=True)
    p.add_argument("--log", help="per-step jsonl training log")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (default: config file, else T2VQA_SEED)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="score videos with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.add_argument("--video-id")
    p.add_argument("--predictions-out", help="csv output for manifest scoring")
    p.add_argument("--text", help="ad-hoc prompt text")
    p.add_argument("--frames-dir", help="ad-hoc frames directory")
    common(p, seed=False)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="run the fold protocol for one scorer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mos", help="MOS records file if manifest lacks them")
    p.add_argument("--splits", required=True)
    p.add_argument("--scorer", default="mos-oracle",
                   help="mos-oracle | random[:SEED] | brightness | checkpoint:PATH")
    p.add_argument("--out", required=True, help="report path (json)")
    common(p, seed=False)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="emit MOS tables and scatter artifacts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mos", help="MOS records file if manifest lacks them")
    p.add_argument("--predictions", help="csv (video_id,pred) for scatter")
    p.add_argument("--plot", action="store_true",
                   help="also render scatter.png (needs the 'plot' extra)")
    common(p, seed=False)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("selftest", help="run the embedded invariant suite")
    common(p)
    p.set_defaults(func=_cmd_selftest)

    return parser


def run(argv: list[str] | None = None) -> int:
    try:
        default_seed = _env_seed()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    parser = build_parser(default_seed)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; --help exits 0
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - boundary: report, don't crash
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
