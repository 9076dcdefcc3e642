"""Stage orchestration: synthetic corpus, QC, trimming, predictor and denoiser
training, pair composition, sentence stitching, and evaluation.

Stages persist their outputs under the work directory with a manifest that
records the relevant config hash and seed, making reruns resumable and
deterministic.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .duration import (
    DurationModelConfig,
    DurationTrainConfig,
    GlossDurationPredictor,
    GlossPlan,
    PairExample,
    SentenceDurationPredictor,
    SentenceExample,
    integer_plan,
    pair_features,
    sentence_token_features,
    target_allocation,
    target_scale,
    train_gloss_predictor,
    train_sentence_predictor,
)
from .inpaint import (
    Denoiser,
    DenoiserConfig,
    DiffusionSchedule,
    InpaintTrainConfig,
    PairItem,
    ddim_refine,
    linear_transition_baseline,
    make_boundary_mask,
    train_inpainter,
)
from .metrics import SyntheticSkeletonAdapter, dtw_align, dtw_error, fgd, length_ratio
from .motion import MotionSequence, resample_frames, write_motion
from .neuralkit import load_checkpoint, restore_into, save_checkpoint
from .qc import QcConfig, qc_filters
from .records import export_canonical
from .stitch import assemble_sentence
from .synth import SynthCorpus, SynthSpec, synth_generate
from .trimming import TrimConfig, trim

log = logging.getLogger(__name__)

WORKERS_ENV = "SIGNWEAVE_WORKERS"


@dataclass
class PipelineConfig:
    work_dir: str = "work"
    seed: int = 0
    synth: SynthSpec = field(default_factory=SynthSpec)
    pair_rounds: int = 2
    holdout_fraction: float = 0.08
    trim: TrimConfig = field(default_factory=TrimConfig)
    use_annotated_spans: bool = False
    qc: QcConfig = field(default_factory=QcConfig)
    dur_model: DurationModelConfig = field(default_factory=DurationModelConfig)
    dur_gloss: DurationTrainConfig = field(default_factory=lambda: DurationTrainConfig(tau=0.55, epochs=30))
    dur_sent: DurationTrainConfig = field(default_factory=lambda: DurationTrainConfig(tau=0.60, epochs=40))
    min_gloss_len: int = 4
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    inpaint_train: InpaintTrainConfig = field(default_factory=lambda: InpaintTrainConfig(ema_decay=0.995))
    ddim_steps: int = 50
    inference_radius: int = 10
    baseline_transition_frames: int = 4

    @property
    def workers(self) -> int:
        return max(int(os.environ.get(WORKERS_ENV, "1")), 1)


# stage order with the config fields each stage depends on (cumulative hashing)
STAGE_FIELDS = [
    ("synth", ["seed", "synth", "pair_rounds", "holdout_fraction"]),
    ("qc", ["qc"]),
    ("trim", ["trim", "use_annotated_spans"]),
    ("duration", ["dur_model", "dur_gloss", "dur_sent", "min_gloss_len"]),
    ("inpaint", ["denoiser", "inpaint_train"]),
    ("compose", ["ddim_steps", "inference_radius", "baseline_transition_frames"]),
    ("eval", []),
]


def _jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, type):
        return value.__name__
    if isinstance(value, np.generic):
        return value.item()
    if callable(value):
        return getattr(value, "__name__", "callable")
    return value


def config_to_dict(config: PipelineConfig) -> dict:
    return _jsonable(config)


def stage_hash(config: PipelineConfig, stage: str) -> str:
    """Hash of every config field the stage (and its predecessors) depends on."""
    payload = {}
    for name, fields in STAGE_FIELDS:
        for f in fields:
            payload[f] = _jsonable(getattr(config, f))
        if name == stage:
            break
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def apply_overrides(config: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply dotted key=value overrides, coercing to the current field type."""
    for item in overrides:
        key, _, raw = item.partition("=")
        if not raw:
            raise ValueError(f"override {item!r} must look like key.path=value")
        target = config
        parts = key.split(".")
        for part in parts[:-1]:
            target = getattr(target, part)
        leaf = parts[-1]
        current = getattr(target, leaf)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        elif isinstance(current, tuple):
            value = tuple(type(current[0])(v) for v in raw.split(","))
        else:
            value = raw
        if dataclasses.is_dataclass(target) and getattr(type(target), "__dataclass_params__").frozen:
            raise ValueError(f"field {key} belongs to a frozen config; set it in the config file")
        setattr(target, leaf, value)
    return config


class StageStore:
    """Per-stage manifest bookkeeping under the work directory."""

    def __init__(self, work_dir: str | Path):
        self.root = Path(work_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    def stage_dir(self, stage: str) -> Path:
        d = self.root / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def manifest_path(self, stage: str) -> Path:
        return self.stage_dir(stage) / "manifest.json"

    def is_done(self, stage: str, config_hash: str) -> bool:
        path = self.manifest_path(stage)
        if not path.exists():
            return False
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError:
            return False
        return manifest.get("config_hash") == config_hash

    def write_manifest(self, stage: str, config_hash: str, seed: int, outputs: list[str],
                       extra: dict | None = None) -> None:
        manifest = {"stage": stage, "config_hash": config_hash, "seed": seed, "outputs": outputs}
        if extra:
            manifest.update(extra)
        self.manifest_path(stage).write_text(json.dumps(manifest, sort_keys=True, indent=1))


# ---------------------------------------------------------------------------
# stage implementations


def _trim_one(args) -> tuple[tuple[int, int], bool]:
    """Worker task: core span for one clip (annotated span on fallback)."""
    clip, cfg, use_annotated = args
    if use_annotated:
        return clip.core_span, False
    result = trim(clip, None, cfg)
    if "boundary-fallback" in result.flags or "span-too-short" in result.flags:
        return clip.core_span, True
    return result.span, False


def _map_items(fn, items, workers: int):
    """Map over independent items, optionally on a process pool."""
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(len(items) // (workers * 4), 1)))


@dataclass
class PreparedData:
    corpus: SynthCorpus
    cores: dict[str, np.ndarray]          # clip id -> trimmed core frames
    train_ids: list[str]
    eval_ids: list[str]
    trim_fallbacks: int = 0


def _split_sentences(corpus: SynthCorpus, holdout: float, seed: int) -> tuple[list[str], list[str]]:
    ids = [s.sentence_id for s in corpus.sentences]
    rng = np.random.default_rng(seed + 1)
    order = rng.permutation(len(ids))
    n_eval = max(int(round(len(ids) * holdout)), 1)
    eval_idx = set(order[:n_eval].tolist())
    train = [ids[i] for i in range(len(ids)) if i not in eval_idx]
    held = [ids[i] for i in range(len(ids)) if i in eval_idx]
    return train, held


def prepare_data(config: PipelineConfig, store: StageStore) -> PreparedData:
    """Stages synth + qc + trim; cheap enough to recompute deterministically."""
    t0 = time.time()
    corpus = synth_generate(config.synth, rounds=config.pair_rounds)
    synth_dir = store.stage_dir("synth")
    h_synth = stage_hash(config, "synth")
    if not store.is_done("synth", h_synth):
        export_canonical(corpus.word_records(), synth_dir / "words.json", "W")
        export_canonical(corpus.dialogue_records(), synth_dir / "dialogues.json", "U")
        store.write_manifest("synth", h_synth, config.seed,
                             ["words.json", "dialogues.json"],
                             {"sentences": len(corpus.sentences), "pairs": len(corpus.pair_specs)})
    log.info("synth ready in %.1fs", time.time() - t0)

    h_qc = stage_hash(config, "qc")
    kept = 0
    for gloss, clips in corpus.clips.items():
        filtered = []
        for clip in clips:
            result = qc_filters(clip, config.qc)
            if result.keep:
                filtered.append(result.clip)
                kept += 1
        corpus.clips[gloss] = filtered
    if not store.is_done("qc", h_qc):
        store.write_manifest("qc", h_qc, config.seed, [], {"kept_clips": kept})

    h_trim = stage_hash(config, "trim")
    trim_dir = store.stage_dir("trim")
    spans_path = trim_dir / "spans.json"
    fallbacks = 0
    spans: dict[str, list[int]] = {}
    if store.is_done("trim", h_trim) and spans_path.exists():
        spans = {k: v for k, v in json.loads(spans_path.read_text()).items()}
    else:
        all_clips = [clip for clips in corpus.clips.values() for clip in clips]
        results = _map_items(_trim_one,
                             [(clip, config.trim, config.use_annotated_spans) for clip in all_clips],
                             config.workers)
        for clip, (span, fell_back) in zip(all_clips, results):
            fallbacks += int(fell_back)
            spans[clip.source["id"]] = [int(span[0]), int(span[1])]
        spans_path.write_text(json.dumps(spans, sort_keys=True))
        store.write_manifest("trim", h_trim, config.seed, ["spans.json"], {"fallbacks": fallbacks})

    cores = {}
    for gloss, clips in corpus.clips.items():
        for clip in clips:
            cid = clip.source["id"]
            s, e = spans[cid]
            cores[cid] = clip.motion.frames[s : e + 1]
    train_ids, eval_ids = _split_sentences(corpus, config.holdout_fraction, config.seed)
    return PreparedData(corpus, cores, train_ids, eval_ids, fallbacks)


def _pair_segments(data: PreparedData, spec) -> tuple[np.ndarray, np.ndarray]:
    a = data.cores[f"{spec.gloss_a}.v{spec.variant_a}"]
    b = data.cores[f"{spec.gloss_b}.v{spec.variant_b}"]
    return a, b


def _pair_target_lengths(sample, k: int) -> tuple[int, int]:
    sa, ea = sample.gloss_spans[k]
    sb, eb = sample.gloss_spans[k + 1]
    return ea - sa + 1, eb - sb + 1


def build_duration_examples(data: PreparedData, window: int) -> tuple[list[PairExample], list[PairExample], list[SentenceExample]]:
    """Pair examples (train + held-out) and sentence examples from the corpus."""
    by_id = {s.sentence_id: s for s in data.corpus.sentences}
    train_set = set(data.train_ids)
    train_pairs: list[PairExample] = []
    eval_pairs: list[PairExample] = []
    sent_examples: list[SentenceExample] = []
    variants_by_round: dict[str, dict[int, int]] = {}
    for spec in data.corpus.pair_specs:
        variants_by_round.setdefault(spec.sentence_id, {})[spec.pair_index] = spec.variant_a
        variants_by_round[spec.sentence_id][spec.pair_index + 1] = spec.variant_b

    for spec in data.corpus.pair_specs:
        sid = spec.sentence_id.rsplit(".r", 1)[0]
        sample = by_id[sid]
        a, b = _pair_segments(data, spec)
        la, lb = _pair_target_lengths(sample, spec.pair_index)
        feats = pair_features(a, b, window)
        scale = target_scale(a.shape[0] + b.shape[0], la + lb)
        alloc = np.array([la, lb], dtype=np.float64)
        example = PairExample(feats, scale, alloc / alloc.sum())
        (train_pairs if sid in train_set else eval_pairs).append(example)

    for round_id, variant_map in variants_by_round.items():
        sid = round_id.rsplit(".r", 1)[0]
        if sid not in train_set:
            continue
        sample = by_id[sid]
        segments = [
            data.cores[f"{g}.v{variant_map[i]}"] for i, g in enumerate(sample.glosses)
        ]
        tokens = sentence_token_features(segments)
        t_src = sum(seg.shape[0] for seg in segments)
        scale = target_scale(t_src, sample.frames.shape[0])
        alloc = target_allocation(sample.gloss_spans)
        sent_examples.append(SentenceExample(tokens, scale, alloc))
    return train_pairs, eval_pairs, sent_examples


def train_duration_stage(config: PipelineConfig, store: StageStore, data: PreparedData):
    h = stage_hash(config, "duration")
    stage_dir = store.stage_dir("duration")
    gloss_model = GlossDurationPredictor(config.dur_model, seed=config.seed)
    sent_model = SentenceDurationPredictor(config.dur_model, seed=config.seed)
    gloss_ckpt = stage_dir / "gloss.ckpt"
    sent_ckpt = stage_dir / "sent.ckpt"
    if store.is_done("duration", h) and gloss_ckpt.exists() and sent_ckpt.exists():
        restore_into(gloss_model.params, load_checkpoint(gloss_ckpt))
        restore_into(sent_model.params, load_checkpoint(sent_ckpt))
        return gloss_model, sent_model
    train_pairs, _, sent_examples = build_duration_examples(data, config.dur_model.window)
    t0 = time.time()
    train_gloss_predictor(train_pairs, gloss_model, config.dur_gloss)
    train_sentence_predictor(sent_examples, sent_model, config.dur_sent)
    save_checkpoint(gloss_ckpt, gloss_model.params)
    save_checkpoint(sent_ckpt, sent_model.params)
    store.write_manifest("duration", h, config.seed, ["gloss.ckpt", "sent.ckpt"],
                         {"train_pairs": len(train_pairs), "sentences": len(sent_examples),
                          "seconds": round(time.time() - t0, 1)})
    return gloss_model, sent_model


def duration_adjust_pair(a: np.ndarray, b: np.ndarray, gloss_model: GlossDurationPredictor,
                         window: int, min_len: int) -> tuple[np.ndarray, GlossPlan]:
    pred = gloss_model.predict(pair_features(a, b, window))
    plan = integer_plan(a.shape[0] + b.shape[0], pred, min_len)
    adjusted = np.concatenate([resample_frames(a, plan.lengths[0]), resample_frames(b, plan.lengths[1])])
    return adjusted, plan


def build_inpaint_items(config: PipelineConfig, data: PreparedData,
                        gloss_model: GlossDurationPredictor) -> list[PairItem]:
    by_id = {s.sentence_id: s for s in data.corpus.sentences}
    train_set = set(data.train_ids)
    items = []
    for spec in data.corpus.pair_specs:
        sid = spec.sentence_id.rsplit(".r", 1)[0]
        if sid not in train_set:
            continue
        sample = by_id[sid]
        a, b = _pair_segments(data, spec)
        adjusted, plan = duration_adjust_pair(a, b, gloss_model, config.dur_model.window,
                                              config.min_gloss_len)
        sa, ea = sample.gloss_spans[spec.pair_index]
        sb, eb = sample.gloss_spans[spec.pair_index + 1]
        target = np.concatenate([
            resample_frames(sample.frames[sa : ea + 1], plan.lengths[0]),
            resample_frames(sample.frames[sb : eb + 1], plan.lengths[1]),
        ])
        items.append(PairItem(adjusted, target, plan.lengths[0]))
    return items


def train_inpaint_stage(config: PipelineConfig, store: StageStore, data: PreparedData,
                        gloss_model: GlossDurationPredictor) -> tuple[Denoiser | None, DiffusionSchedule]:
    schedule = DiffusionSchedule()
    h = stage_hash(config, "inpaint")
    stage_dir = store.stage_dir("inpaint")
    ckpt = stage_dir / "denoiser.ckpt"
    if config.inpaint_train.steps <= 0:
        return None, schedule
    if store.is_done("inpaint", h):
        if not ckpt.exists():
            # a completed stage whose checkpoint was removed: fall back to the
            # linear-transition baseline rather than retraining silently
            log.warning("inpaint manifest present but %s is missing; composing with the linear fallback", ckpt)
            return None, schedule
        denoiser = Denoiser(config.denoiser, seed=config.seed)
        restore_into(denoiser.params, load_checkpoint(ckpt))
        return denoiser, schedule
    denoiser = Denoiser(config.denoiser, seed=config.seed)
    items = build_inpaint_items(config, data, gloss_model)
    t0 = time.time()
    history = train_inpainter(items, denoiser, schedule, config.inpaint_train)
    save_checkpoint(ckpt, denoiser.params)
    store.write_manifest("inpaint", h, config.seed, ["denoiser.ckpt"],
                         {"train_items": len(items), "final_loss": history[-1] if history else None,
                          "seconds": round(time.time() - t0, 1)})
    return denoiser, schedule


@dataclass
class ComposedSentence:
    sentence_id: str
    ours: MotionSequence
    baseline: MotionSequence
    fallback: bool = False


def compose_and_stitch(
    config: PipelineConfig,
    data: PreparedData,
    gloss_model: GlossDurationPredictor,
    sent_model: SentenceDurationPredictor,
    denoiser: Denoiser | None,
    schedule: DiffusionSchedule,
    sentence_ids: list[str] | None = None,
) -> list[ComposedSentence]:
    """Refine each adjacent pair and assemble sentence-level motion.

    When no denoiser is available, the refined path falls back to the linear
    transition baseline (recorded per sentence). The baseline path always uses
    plain concatenation with four transition frames and no duration plan.
    """
    by_id = {s.sentence_id: s for s in data.corpus.sentences}
    ids = sentence_ids if sentence_ids is not None else data.eval_ids
    variant_map: dict[str, dict[int, int]] = {}
    for spec in data.corpus.pair_specs:
        if spec.sentence_id.endswith(".r0"):
            sid = spec.sentence_id.rsplit(".r", 1)[0]
            variant_map.setdefault(sid, {})[spec.pair_index] = spec.variant_a
            variant_map[sid][spec.pair_index + 1] = spec.variant_b

    ema_swap = None
    if denoiser is not None:
        ema_swap = denoiser.params.swap_in_ema()
    out = []
    try:
        for sid in ids:
            sample = by_id[sid]
            variants = variant_map.get(sid, {})
            segments = [data.cores[f"{g}.v{variants.get(i, 0)}"] for i, g in enumerate(sample.glosses)]
            k = len(segments)
            digest = int(hashlib.sha256(sid.encode("utf-8")).hexdigest()[:8], 16)
            rng = np.random.default_rng(config.seed + digest)

            refined_pairs = []
            baseline_pairs = []
            fallback = denoiser is None
            for i in range(k - 1):
                a, b = segments[i], segments[i + 1]
                base_frames, base_boundary = linear_transition_baseline(
                    a, b, config.baseline_transition_frames)
                baseline_pairs.append((base_frames, base_boundary))
                if denoiser is None:
                    refined_pairs.append((base_frames, base_boundary))
                    continue
                adjusted, plan = duration_adjust_pair(a, b, gloss_model,
                                                      config.dur_model.window, config.min_gloss_len)
                mask = make_boundary_mask(plan.lengths[0], plan.lengths[1], config.inference_radius)
                refined = ddim_refine(adjusted, mask, denoiser, schedule,
                                      steps=config.ddim_steps, rng=rng)
                refined_pairs.append((refined, plan.lengths[0]))

            if k == 1:
                # single-gloss sentences bypass pairing entirely
                pred = sent_model.predict(segments)
                plan = integer_plan(segments[0].shape[0], pred, config.min_gloss_len)
                ours = assemble_sentence([(segments[0], 0)], GlossPlan([plan.total], plan.total))
                baseline = MotionSequence(segments[0].copy())
            else:
                pred = sent_model.predict(segments)
                t_src = sum(seg.shape[0] for seg in segments)
                plan = integer_plan(t_src, pred, config.min_gloss_len)
                ours = assemble_sentence(refined_pairs, plan)
                baseline = assemble_sentence(baseline_pairs, _natural_plan(baseline_pairs, k))
            out.append(ComposedSentence(sid, ours, baseline, fallback))
    finally:
        if denoiser is not None and ema_swap is not None:
            denoiser.params.restore(ema_swap)
    return out


def _natural_plan(pairs: list[tuple[np.ndarray, int]], k: int) -> GlossPlan:
    """Stitching plan without the sentence-duration predictor: natural lengths."""
    lengths = []
    for gi in range(k):
        if gi == 0:
            lengths.append(pairs[0][1])
        elif gi == k - 1:
            frames, boundary = pairs[-1]
            lengths.append(frames.shape[0] - boundary)
        else:
            right_len = pairs[gi - 1][0].shape[0] - pairs[gi - 1][1]
            left_len = pairs[gi][1]
            lengths.append((right_len + left_len + 1) // 2)
    return GlossPlan(lengths, sum(lengths))


# ---------------------------------------------------------------------------
# evaluation


def evaluate_composed(
    composed: list[ComposedSentence],
    data: PreparedData,
    adapter: SyntheticSkeletonAdapter | None = None,
    dump_paths: bool = False,
) -> dict:
    """Sentence-level metrics table for the refined and baseline outputs.

    With dump_paths, the DTW alignment path of each output against its
    reference is included for debugging.
    """
    adapter = adapter if adapter is not None else SyntheticSkeletonAdapter()
    by_id = {s.sentence_id: s for s in data.corpus.sentences}
    rows = []
    paths = []
    pooled: dict[str, list[np.ndarray]] = {"ours": [], "baseline": [], "reference": []}
    lengths: dict[str, list[float]] = {"ours": [], "baseline": [], "reference": []}
    sums: dict[str, dict[str, float]] = {}
    for item in composed:
        sample = by_id[item.sentence_id]
        ref_pts = adapter.to_points(sample.frames)
        pooled["reference"].append(sample.frames)
        lengths["reference"].append(sample.frames.shape[0])
        for method, seq in (("ours", item.ours), ("baseline", item.baseline)):
            pts = adapter.to_points(seq.frames)
            row = {
                "sentence_id": item.sentence_id,
                "method": method,
                "dtw_mpjpe_body": dtw_error(pts, ref_pts, adapter.body_joints),
                "dtw_mpjpe_hands": dtw_error(pts, ref_pts, adapter.hand_joints),
                "dtw_mpjpe_overall": dtw_error(
                    pts, ref_pts, np.concatenate([adapter.body_joints, adapter.hand_joints])),
                "dtw_mpvpe_face": dtw_error(pts, ref_pts, adapter.face_vertices),
                "dtw_pa_mpjpe": dtw_error(
                    pts, ref_pts, np.concatenate([adapter.body_joints, adapter.hand_joints]),
                    procrustes_align=True),
                "pred_frames": seq.num_frames,
                "ref_frames": sample.frames.shape[0],
                "fallback": item.fallback,
            }
            rows.append(row)
            pooled[method].append(seq.frames)
            lengths[method].append(seq.num_frames)
            if dump_paths:
                joints = np.concatenate([adapter.body_joints, adapter.hand_joints])
                path, cost = dtw_align(pts[:, joints, :], ref_pts[:, joints, :])
                paths.append({
                    "sentence_id": item.sentence_id,
                    "method": method,
                    "total_cost": cost,
                    "path": [[int(i), int(j)] for i, j in path],
                })
    summary = {}
    for method in ("ours", "baseline"):
        method_rows = [r for r in rows if r["method"] == method]
        summary[method] = {
            key: float(np.mean([r[key] for r in method_rows]))
            for key in ("dtw_mpjpe_body", "dtw_mpjpe_hands", "dtw_mpjpe_overall",
                        "dtw_mpvpe_face", "dtw_pa_mpjpe")
        }
        summary[method]["length_ratio"] = length_ratio(lengths[method], lengths["reference"])
        summary[method]["fgd"] = fgd(np.concatenate(pooled[method]), np.concatenate(pooled["reference"]))
    out = {"rows": rows, "summary": summary}
    if dump_paths:
        out["paths"] = paths
    return out


def evaluate_duration(data: PreparedData, gloss_model: GlossDurationPredictor, window: int) -> dict:
    """Held-out scale-prediction error against the identity baseline."""
    _, eval_pairs, _ = build_duration_examples(data, window)
    if not eval_pairs:
        return {"model_mae": float("nan"), "identity_mae": float("nan"), "pairs": 0}
    model_errors = []
    identity_errors = []
    for ex in eval_pairs:
        pred = gloss_model.predict(ex.features)
        model_errors.append(abs(pred.scale - ex.scale))
        identity_errors.append(abs(ex.scale))
    model_mae = float(np.mean(model_errors))
    identity_mae = float(np.mean(identity_errors))
    return {
        "model_mae": model_mae,
        "identity_mae": identity_mae,
        "improvement": 1.0 - model_mae / identity_mae if identity_mae > 0 else float("nan"),
        "pairs": len(eval_pairs),
    }


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute every stage and return (and persist) the final report."""
    store = StageStore(config.work_dir)
    timings = {}
    t0 = time.time()
    data = prepare_data(config, store)
    timings["prepare"] = time.time() - t0

    t0 = time.time()
    gloss_model, sent_model = train_duration_stage(config, store, data)
    timings["duration"] = time.time() - t0

    t0 = time.time()
    denoiser, schedule = train_inpaint_stage(config, store, data, gloss_model)
    timings["inpaint"] = time.time() - t0

    t0 = time.time()
    composed = compose_and_stitch(config, data, gloss_model, sent_model, denoiser, schedule)
    compose_dir = store.stage_dir("compose")
    for item in composed:
        write_motion(compose_dir / f"{item.sentence_id}.ours.svmx", item.ours)
        write_motion(compose_dir / f"{item.sentence_id}.baseline.svmx", item.baseline)
    store.write_manifest("compose", stage_hash(config, "compose"), config.seed,
                         [f"{c.sentence_id}.ours.svmx" for c in composed],
                         {"fallback": any(c.fallback for c in composed)})
    timings["compose"] = time.time() - t0

    t0 = time.time()
    eval_result = evaluate_composed(composed, data)
    duration_eval = evaluate_duration(data, gloss_model, config.dur_model.window)
    timings["eval"] = time.time() - t0

    report = {
        "config_hash": stage_hash(config, "eval"),
        "seed": config.seed,
        "timings": {k: round(v, 2) for k, v in timings.items()},
        "trim_fallbacks": data.trim_fallbacks,
        "eval_sentences": len(data.eval_ids),
        "denoiser_fallback": any(c.fallback for c in composed),
        "duration_eval": duration_eval,
        "sentence": eval_result["summary"],
    }
    eval_dir = store.stage_dir("eval")
    with open(eval_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in eval_result["rows"]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    (eval_dir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    store.write_manifest("eval", stage_hash(config, "eval"), config.seed,
                         ["metrics.jsonl", "report.json"])
    return report
