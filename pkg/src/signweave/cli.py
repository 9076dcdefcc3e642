"""Command-line entry points for the batch toolkit."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import glossnorm as gn
from .duration import DurationTrainConfig, GlossPlan
from .inpaint import InpaintTrainConfig
from .metrics import ranking_metrics
from .motion import read_motion, write_motion
from .pipeline import (
    PipelineConfig,
    StageStore,
    apply_overrides,
    compose_and_stitch,
    config_to_dict,
    evaluate_composed,
    evaluate_duration,
    prepare_data,
    run_pipeline,
    train_duration_stage,
    train_inpaint_stage,
)
from .qc import QcConfig, qc_filters
from .records import export_canonical, ingest, word_record_to_clip
from .retrieval import load_corpus, retrieve
from .stitch import assemble_sentence
from .synth import SynthSpec, synth_generate
from .trimming import TrimConfig, trim


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig()
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text())
        config = _config_from_dict(raw)
    overrides = getattr(args, "set", None) or []
    apply_overrides(config, overrides)
    if getattr(args, "work_dir", None):
        config.work_dir = args.work_dir
    return config


def _config_from_dict(raw: dict) -> PipelineConfig:
    """Rebuild the nested config dataclasses from a plain JSON dict."""
    kwargs = {}
    nested = {
        "synth": SynthSpec,
        "trim": TrimConfig,
        "qc": QcConfig,
        "dur_gloss": DurationTrainConfig,
        "dur_sent": DurationTrainConfig,
    }
    from .duration import DurationModelConfig
    from .inpaint import DenoiserConfig

    nested["dur_model"] = DurationModelConfig
    nested["denoiser"] = DenoiserConfig
    nested["inpaint_train"] = InpaintTrainConfig
    for key, value in raw.items():
        if key in nested and isinstance(value, dict):
            cls = nested[key]
            fields = {f.name: f for f in dataclasses.fields(cls)}
            clean = {}
            for k, v in value.items():
                if k not in fields:
                    raise ValueError(f"unknown config key {key}.{k}")
                if isinstance(v, list):
                    v = tuple(v)
                if k == "dtype":
                    v = {"float32": np.float32, "float64": np.float64}[v]
                clean[k] = v
            kwargs[key] = cls(**clean)
        elif key in ("identity_hook",):
            continue
        else:
            kwargs[key] = value
    return PipelineConfig(**kwargs)


def cmd_synth(args) -> int:
    config = _load_config(args)
    corpus = synth_generate(config.synth, rounds=config.pair_rounds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_canonical(corpus.word_records(), out / "words.json", "W")
    export_canonical(corpus.dialogue_records(), out / "dialogues.json", "U")
    print(f"wrote {len(corpus.word_records())} word records and "
          f"{len(corpus.sentences)} sentences to {out}")
    return 0


def cmd_ingest(args) -> int:
    records = ingest(args.path, args.schema, strict=not args.lenient)
    print(f"{args.path}: {len(records)} valid {args.schema} records")
    if args.export:
        export_canonical(records, args.export, args.schema)
        print(f"canonical export written to {args.export}")
    return 0


def cmd_qc(args) -> int:
    records = ingest(args.path, "W", strict=not args.lenient)
    cfg = QcConfig()
    kept = 0
    dominant_labels: dict[str, bool] = {}
    if args.dominant_split:
        from collections import defaultdict

        from .qc import dominant_split

        by_gloss = defaultdict(list)
        for record in records:
            by_gloss[record.gloss].append(record)
        for gloss, group in by_gloss.items():
            clips = [word_record_to_clip(r).motion.frames for r in group]
            labels = dominant_split(clips)
            for record, label in zip(group, labels):
                dominant_labels[str(record.source_info.get("id"))] = label
    with open(args.out, "w", encoding="utf-8") as fh:
        for record in records:
            clip = word_record_to_clip(record)
            result = qc_filters(clip, cfg)
            kept += int(result.keep)
            row = {
                "id": record.source_info.get("id"),
                "keep": result.keep,
                "reasons": result.reasons,
            }
            if args.dominant_split:
                row["is_dominant"] = dominant_labels.get(str(record.source_info.get("id")), True)
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"kept {kept}/{len(records)}; report at {args.out}")
    return 0


def cmd_trim(args) -> int:
    records = ingest(args.path, "W", strict=not args.lenient)
    cfg = TrimConfig()
    spans = {}
    for record in records:
        clip = word_record_to_clip(record)
        result = trim(clip, None, cfg)
        spans[record.source_info.get("id", record.gloss)] = {
            "span": list(result.span),
            "flags": result.flags,
        }
    Path(args.out).write_text(json.dumps(spans, sort_keys=True, indent=1))
    print(f"trimmed {len(spans)} clips; spans at {args.out}")
    return 0


def cmd_train_duration(args) -> int:
    config = _load_config(args)
    if args.tau is not None:
        which = config.dur_gloss if args.which == "gloss" else config.dur_sent
        which.tau = args.tau
    if args.epochs is not None:
        (config.dur_gloss if args.which == "gloss" else config.dur_sent).epochs = args.epochs
    if args.lr is not None:
        (config.dur_gloss if args.which == "gloss" else config.dur_sent).lr = args.lr
    store = StageStore(config.work_dir)
    data = prepare_data(config, store)
    gloss_model, sent_model = train_duration_stage(config, store, data)
    report = evaluate_duration(data, gloss_model, config.dur_model.window)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_train_inpainter(args) -> int:
    config = _load_config(args)
    store = StageStore(config.work_dir)
    data = prepare_data(config, store)
    gloss_model, _ = train_duration_stage(config, store, data)
    denoiser, _ = train_inpaint_stage(config, store, data, gloss_model)
    print(f"denoiser checkpoint under {Path(config.work_dir) / 'inpaint'}"
          if denoiser is not None else "training skipped (steps <= 0)")
    return 0


def cmd_compose(args) -> int:
    config = _load_config(args)
    if args.radius is not None:
        config.inference_radius = args.radius
    if args.steps is not None:
        config.ddim_steps = args.steps
    store = StageStore(config.work_dir)
    data = prepare_data(config, store)
    gloss_model, sent_model = train_duration_stage(config, store, data)
    denoiser, schedule = train_inpaint_stage(config, store, data, gloss_model)
    composed = compose_and_stitch(config, data, gloss_model, sent_model, denoiser, schedule)
    out = Path(args.out) if args.out else store.stage_dir("compose")
    out.mkdir(parents=True, exist_ok=True)
    for item in composed:
        write_motion(out / f"{item.sentence_id}.ours.svmx", item.ours)
        write_motion(out / f"{item.sentence_id}.baseline.svmx", item.baseline)
    fallback = any(c.fallback for c in composed)
    print(f"composed {len(composed)} sentences to {out}" + (" (linear fallback)" if fallback else ""))
    return 0


def cmd_stitch(args) -> int:
    manifest = json.loads(Path(args.pairs_manifest).read_text())
    pairs = []
    base = Path(args.pairs_manifest).parent
    for entry in manifest["pairs"]:
        seq = read_motion(base / entry["file"])
        pairs.append((seq.frames, int(entry["boundary"])))
    plan_raw = json.loads(Path(args.plan).read_text())
    plan = GlossPlan(list(plan_raw["lengths"]), sum(plan_raw["lengths"]))
    out = assemble_sentence(pairs, plan)
    write_motion(args.out, out)
    print(f"stitched {len(pairs)} pairs into {out.num_frames} frames at {args.out}")
    return 0


def cmd_glossnorm(args) -> int:
    if args.pairs:
        # filter mode: JSONL of {english, gloss}; emits one report per line
        reports = []
        for line in Path(args.pairs).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            tokens = gn.normalize(gn.tokenize(rec["gloss"]))
            report = gn.filter_pair(rec["english"], tokens)
            reports.append(json.dumps({
                "english": rec["english"],
                "gloss": gn.detokenize(tokens),
                "decision": report.decision,
                "reasons": report.reasons,
            }, sort_keys=True))
        text = "\n".join(reports) + ("\n" if reports else "")
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    source = Path(args.input).read_text().splitlines() if args.input else sys.stdin.read().splitlines()
    out_lines = []
    for line in source:
        tokens = gn.normalize(gn.tokenize(line))
        if args.collapse_fingerspell:
            tokens = gn.collapse_fingerspell(tokens)
        out_lines.append(gn.detokenize(tokens))
    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_retrieve(args) -> int:
    corpus = load_corpus(args.corpus)
    if args.eval_queries:
        rank_lists, refs = [], []
        with open(args.eval_queries, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                result = retrieve(rec["query"], corpus, k_out=args.k)
                rank_lists.append([c.document.doc_id for c in result.candidates])
                refs.append(rec.get("reference_id"))
        table = ranking_metrics(rank_lists, refs, ks=(1, 5, 10))
        print(json.dumps(table, sort_keys=True))
        return 0
    result = retrieve(args.query, corpus, k_out=args.k)
    for cand in result.candidates:
        print(json.dumps({
            "id": cand.document.doc_id,
            "english": cand.document.english,
            "gloss": cand.document.gloss,
            "s_final": round(cand.s_final, 6),
            "s_first": round(cand.s_first, 6),
        }, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    store = StageStore(config.work_dir)
    data = prepare_data(config, store)
    gloss_model, sent_model = train_duration_stage(config, store, data)
    denoiser, schedule = train_inpaint_stage(config, store, data, gloss_model)
    composed = compose_and_stitch(config, data, gloss_model, sent_model, denoiser, schedule)
    result = evaluate_composed(composed, data, dump_paths=args.dump_paths)
    eval_dir = store.stage_dir("eval")
    with open(eval_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in result["rows"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    if args.dump_paths:
        with open(eval_dir / "paths.jsonl", "w", encoding="utf-8") as fh:
            for entry in result["paths"]:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    print(json.dumps(result["summary"], indent=1, sort_keys=True))
    return 0


def cmd_pipeline(args) -> int:
    config = _load_config(args)
    report = run_pipeline(config)
    print(json.dumps(report, indent=1, sort_keys=True))
    return 0


def cmd_show_config(args) -> int:
    config = _load_config(args)
    print(json.dumps(config_to_dict(config), indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signweave",
        description="Compose isolated sign-motion clips into continuous sentences and evaluate them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, work_dir=True):
        p.add_argument("--config", help="JSON pipeline config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted config override, e.g. --set inpaint_train.steps=500")
        if work_dir:
            p.add_argument("--work-dir", help="stage output directory")

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a W or U annotation file")
    p.add_argument("--path", required=True)
    p.add_argument("--schema", choices=["W", "U"], required=True)
    p.add_argument("--lenient", action="store_true", help="allow unknown keys")
    p.add_argument("--export", help="write a canonical re-export here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("qc", help="quality-control report for a W file")
    p.add_argument("--path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--dominant-split", action="store_true",
                   help="also label dominant/non-dominant clips per gloss")
    p.set_defaults(func=cmd_qc)

    p = sub.add_parser("trim", help="articulation spans for a W file")
    p.add_argument("--path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_trim)

    p = sub.add_parser("train-duration", help="train a duration predictor")
    common(p)
    p.add_argument("--which", choices=["gloss", "sent"], default="gloss")
    p.add_argument("--tau", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train_duration)

    p = sub.add_parser("train-inpainter", help="train the boundary-inpainting denoiser")
    common(p)
    p.set_defaults(func=cmd_train_inpainter)

    p = sub.add_parser("compose", help="refine pairs and stitch held-out sentences")
    common(p)
    p.add_argument("--radius", type=int, help="inference inpaint radius")
    p.add_argument("--steps", type=int, help="DDIM step count")
    p.add_argument("--out", help="output directory for motion binaries")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("stitch", help="assemble pair motion files into one sentence")
    p.add_argument("--pairs-manifest", required=True,
                   help='JSON: {"pairs": [{"file": ..., "boundary": ...}, ...]}')
    p.add_argument("--plan", required=True, help='JSON: {"lengths": [...]}')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("glossnorm", help="normalize gloss lines or filter english-gloss pairs")
    p.add_argument("--input", help="text file, one gloss sequence per line (stdin otherwise)")
    p.add_argument("--out", help="output file (stdout otherwise)")
    p.add_argument("--collapse-fingerspell", action="store_true")
    p.add_argument("--pairs", help="JSONL of {english, gloss}; emits filter reports instead")
    p.set_defaults(func=cmd_glossnorm)

    p = sub.add_parser("retrieve", help="query the translation memory")
    p.add_argument("--corpus", required=True, help="line-delimited JSON corpus")
    p.add_argument("--query")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--eval-queries", help="JSONL of {query, reference_id}; prints MRR/R@k")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="metrics table for composed sentences")
    common(p)
    p.add_argument("--dump-paths", action="store_true",
                   help="also write the DTW alignment paths for debugging")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("show-config", help="print the resolved configuration")
    common(p)
    p.set_defaults(func=cmd_show_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "retrieve" and not args.query and not args.eval_queries:
        parser.error("retrieve requires --query or --eval-queries")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
