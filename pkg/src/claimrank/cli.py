"""``claimrank`` command line: one subcommand per pipeline stage.

Every run appends one JSON provenance line (config hash, seed, input and
output hashes) to a run log. Options can come from an INI-style config file
(``--config``); values are read from ``[run]`` and from the section named
after the subcommand, and explicit flags override them.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .align import TeacherBundle, alignment_mse, extract_teacher_reps, train_aligned_student
from .audio import (MAX_SEGMENT_SECONDS, MfccConfig, NoiseGateConfig, Waveform, cut_segment,
                    read_wav, segment_features, spectral_gate_denoise, write_wav)
from .corpus import (MANIFEST_NAME, SEGMENTS_NAME, Corpus, Event, FixtureSpec, SegmentRef,
                     compute_stats, filter_speaker, format_transcript, generate_fixture,
                     load_corpus, load_manifest, load_segment_map, load_transcript,
                     load_variant_rows, full_scale_fixture, write_corpus, write_segment_map)
from .errors import ClaimrankError, ConfigError, NumericalError, ValidationError
from .evaluation import (Prediction, compare_runs, format_comparison, map_over_events,
                         read_predictions, read_report, write_predictions, write_report)
from .features import FeatureMatrix, read_feature_csv, standardize, write_feature_csv
from .fusion import FUSION_PRESETS, FusionPipeline, preset, train_fusion_head
from .nn import (LR_PRESETS, Checkpoint, Composite, CrossEntropy, Hinge, LabeledSet, Mlp,
                 MlpSpec, RepresentationMSE, TrainConfig, gradcheck, train_classifier)
from .sampling import VariantSpec, make_variant
from .textfeat import RegexTagger, SidecarTagger, TfidfModel, fit_tfidf, ne_matrix, tfidf_dense, tokenize

log = logging.getLogger("claimrank")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
RUN_LOG_NAME = "run.log"


class UsageError(ValidationError):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    # Usage problems are validation errors (exit 1), not argparse's exit 2.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers


def worker_count() -> int:
    raw = os.environ.get("CLAIMRANK_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CLAIMRANK_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"CLAIMRANK_THREADS must be a positive integer, got {raw!r}")
    return n


def parallel_map(fn, items):
    """Order-preserving map over a thread pool capped by ``CLAIMRANK_THREADS``."""
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _unit_float(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} not in [0, 1]")
    return v


def file_sha256(path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(p.relative_to(path).as_posix().encode())
            h.update(bytes.fromhex(file_sha256(p)))
        return h.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _settings(args) -> dict:
    skip = {"func", "run_log", "config", "inputs_", "outputs_"}
    return {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(vars(args).items()) if k not in skip}


def config_hash(args) -> str:
    blob = json.dumps(_settings(args), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_provenance(args, inputs, outputs) -> Path:
    """Append one JSON line describing this run to the run log."""
    if args.run_log:
        path = Path(args.run_log)
    else:
        anchor = next((Path(o) for o in outputs), None)
        if anchor is None:
            path = Path(RUN_LOG_NAME)
        else:
            path = (anchor if anchor.is_dir() else anchor.parent) / RUN_LOG_NAME
    record = {
        "command": args.command,
        "version": __version__,
        "config_hash": config_hash(args),
        "seed": getattr(args, "seed", None),
        "settings": _settings(args),
        "inputs": {str(p): file_sha256(p) for p in inputs if Path(p).exists()},
        "outputs": {str(p): file_sha256(p) for p in outputs if Path(p).exists()},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True, default=str) + "\n")
    return path


def _segments_path(corpus_dir) -> Path:
    return Path(corpus_dir) / SEGMENTS_NAME


def _load_segments(corpus_dir, corpus: Corpus) -> list[SegmentRef]:
    path = _segments_path(corpus_dir)
    if not path.exists():
        raise ValidationError(f"{corpus_dir}: no {SEGMENTS_NAME}; audio commands need a segment map")
    return load_segment_map(path, corpus)


def _audio_file(corpus_dir, audio_path: str, denoised: bool = False) -> Path:
    p = Path(audio_path)
    if not p.is_absolute():
        p = Path(corpus_dir) / p
    return p.with_name(p.stem + ".denoised.wav") if denoised else p


def _labeled(corpus: Corpus, fm: FeatureMatrix, split: str, utterances=None) -> LabeledSet:
    utts = corpus.utterances(split) if utterances is None else utterances
    keys = [u.key for u in utts]
    try:
        x = fm.rows(keys)
    except KeyError as exc:
        raise ValidationError(f"feature file does not cover the {split} split: {exc.args[0]}") from None
    return LabeledSet(x, [u.label for u in utts], keys)


def _train_config(args) -> TrainConfig:
    lr = LR_PRESETS[args.lr_preset] if getattr(args, "lr_preset", None) else args.lr
    return TrainConfig(learning_rate=lr, epochs=args.epochs, warmup_proportion=args.warmup,
                       weight_decay=args.weight_decay, batch_size=args.batch_size,
                       seed=args.seed, lam=getattr(args, "lam", 0.75))


def _gate_config(args) -> NoiseGateConfig:
    return NoiseGateConfig(args.n_fft, args.hop, args.n_std_thresh, args.prop_decrease,
                           args.freq_smooth_bins, args.time_smooth_frames, args.noise_floor_bins)


def _mfcc_config(args) -> MfccConfig:
    return MfccConfig(args.win_ms, args.hop_ms, args.n_mels, args.n_mfcc, args.preemphasis)


# ---------------------------------------------------------------------------
# subcommands


def cmd_fixture(args):
    out = Path(args.out)
    if args.kind == "full-scale":
        corpus = full_scale_fixture(args.seed)
        write_corpus(corpus, out)
    elif args.kind == "complementary":
        from .synthetic import ComplementarySpec, complementary_fixture
        spec = ComplementarySpec(seed=args.seed)
        if args.events is not None:
            spec = replace(spec, n_events=args.events)
        if args.sentences is not None:
            spec = replace(spec, n_per_event=args.sentences)
        if args.positive_rate is not None:
            spec = replace(spec, positive_rate=args.positive_rate)
        fx = complementary_fixture(spec)
        corpus = fx.corpus
        write_corpus(corpus, out)
        write_feature_csv(fx.text, out / "text_features.csv")
        write_feature_csv(fx.audio, out / "audio_features.csv")
    else:
        spec = FixtureSpec(n_events=5 if args.events is None else args.events,
                           n_sentences_per_event=40 if args.sentences is None else args.sentences,
                           positive_rate=0.2 if args.positive_rate is None else args.positive_rate,
                           seed=args.seed, with_audio=args.audio, sample_rate=args.sample_rate)
        fx = generate_fixture(spec)
        corpus = fx.corpus
        write_corpus(corpus, out)
        if args.audio:
            for rel, wave in sorted(fx.recordings.items()):
                (out / rel).parent.mkdir(parents=True, exist_ok=True)
                write_wav(wave, out / rel)
            write_segment_map(fx.segments, _segments_path(out))
    print(compute_stats(corpus).format(), end="")
    return [], [out]


def cmd_ingest(args):
    src, out = Path(args.transcripts), Path(args.out)
    manifest_path = Path(args.manifest) if args.manifest else src / MANIFEST_NAME
    manifest = load_manifest(manifest_path)
    events = [load_transcript(src / f"{eid}.tsv", eid, split) for eid, split in manifest.items()]
    corpus = Corpus(tuple(events))
    write_corpus(corpus, out)
    inputs = [manifest_path] + [src / f"{eid}.tsv" for eid in manifest]
    if args.segments:
        seg_path = Path(args.segments)
        refs = load_segment_map(seg_path, corpus)
        rebased = []
        for r in refs:
            audio = Path(r.audio_path)
            if not audio.is_absolute():
                audio = seg_path.parent / audio
            rel = os.path.relpath(audio.resolve(), out.resolve())
            rebased.append(SegmentRef(r.event_id, r.line_no, Path(rel).as_posix(), r.start_ms, r.end_ms))
        write_segment_map(rebased, _segments_path(out))
        inputs.append(seg_path)
    print(compute_stats(corpus).format(), end="")
    return inputs, [out]


def cmd_stats(args):
    corpus = load_corpus(args.corpus)
    if args.speaker:
        corpus = filter_speaker(corpus, args.speaker)
    text = compute_stats(corpus).format()
    outputs = []
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        outputs.append(Path(args.out))
    print(text, end="")
    return [Path(args.corpus)], outputs


def cmd_variant(args):
    corpus = load_corpus(args.corpus)
    spec = VariantSpec.parse(args.kind, args.seed)
    rows = make_variant(corpus.utterances("train"), spec)
    out = Path(args.out) if args.out else Path(args.corpus) / "variants"
    out.mkdir(parents=True, exist_ok=True)
    by_event: dict[str, list] = {e.event_id: [] for e in corpus.split("train")}
    for u in rows:
        by_event[u.event_id].append(u)
    written = []
    for event_id, utts in by_event.items():
        path = out / f"{event_id}.{spec.suffix}.tsv"
        path.write_text(format_transcript(utts), encoding="utf-8")
        written.append(path)
    pos = sum(u.label for u in rows)
    share = 100.0 * pos / len(rows) if rows else 0.0
    print(f"{spec.suffix}: {len(rows)} rows, {pos} check-worthy ({share:.2f}%)")
    return [Path(args.corpus)], written


def cmd_filter_speaker(args):
    corpus = load_corpus(args.corpus)
    kept = filter_speaker(corpus, args.speaker)
    out = Path(args.out)
    write_corpus(kept, out)
    seg = _segments_path(args.corpus)
    if seg.exists():
        keys = set(kept.index())
        refs = [r for r in load_segment_map(seg, corpus) if r.key in keys]
        rebased = []
        for r in refs:
            audio = _audio_file(args.corpus, r.audio_path)
            rel = os.path.relpath(audio.resolve(), out.resolve())
            rebased.append(replace(r, audio_path=Path(rel).as_posix()))
        write_segment_map(rebased, _segments_path(out))
    print(compute_stats(kept).format(), end="")
    return [Path(args.corpus)], [out]


def _denoise_recording(path: Path, refs: list[SegmentRef], cfg: NoiseGateConfig) -> Path:
    wave = read_wav(path)
    out = wave.samples.copy()
    sr = wave.sample_rate
    for r in refs:
        a = min(r.start_ms * sr // 1000, len(out))
        b = min(r.end_ms * sr // 1000, len(out))
        if b - a >= cfg.n_fft:
            out[a:b] = spectral_gate_denoise(Waveform(out[a:b], sr), cfg).samples
    target = path.with_name(path.stem + ".denoised.wav")
    write_wav(Waveform(np.clip(out, -1.0, 1.0), sr), target)
    return target


def cmd_denoise(args):
    cfg = _gate_config(args)
    if args.input:
        src = Path(args.input)
        target = Path(args.output) if args.output else src.with_name(src.stem + ".denoised.wav")
        wave = read_wav(src)
        write_wav(spectral_gate_denoise(wave, cfg), target)
        return [src], [target]
    if not args.corpus:
        raise UsageError("denoise needs --corpus or --input")
    corpus = load_corpus(args.corpus)
    refs = _load_segments(args.corpus, corpus)
    groups: dict[Path, list[SegmentRef]] = {}
    for r in refs:
        groups.setdefault(_audio_file(args.corpus, r.audio_path), []).append(r)
    outputs = parallel_map(lambda item: _denoise_recording(item[0], item[1], cfg),
                           sorted(groups.items()))
    print(f"denoised {len(outputs)} recording(s), {len(refs)} segment(s)")
    return sorted(groups), outputs


def cmd_segment(args):
    corpus = load_corpus(args.corpus)
    refs = _load_segments(args.corpus, corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache: dict[Path, Waveform] = {}
    for path in sorted({_audio_file(args.corpus, r.audio_path, args.denoised) for r in refs}):
        cache[path] = read_wav(path)

    def cut(r):
        seg = cut_segment(cache[_audio_file(args.corpus, r.audio_path, args.denoised)], r,
                          args.max_seconds)
        name = f"{r.event_id}_{r.line_no}.wav"
        write_wav(seg, out / name)
        return SegmentRef(r.event_id, r.line_no, name, 0, max(1, len(seg) * 1000 // seg.sample_rate))

    new_refs = parallel_map(cut, refs)
    write_segment_map(new_refs, out / SEGMENTS_NAME)
    print(f"wrote {len(new_refs)} segment(s) to {out}")
    return sorted(cache), [out]


def cmd_features(args):
    corpus = load_corpus(args.corpus)
    utts = corpus.utterances()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    inputs, outputs = [Path(args.corpus)], [out]
    if args.kind == "tfidf":
        if args.tfidf_model:
            model = TfidfModel.load(args.tfidf_model)
            inputs += [Path(args.tfidf_model + ".vocab"), Path(args.tfidf_model + ".idf.csv")]
        else:
            model = fit_tfidf([tokenize(u.text) for u in corpus.utterances("train")],
                              min_df=args.min_df)
            prefix = str(out.with_suffix("")) + ".tfidf"
            model.save(prefix)
            outputs += [Path(prefix + ".vocab"), Path(prefix + ".idf.csv")]
        values = tfidf_dense(model, (tokenize(u.text) for u in utts))
        fm = FeatureMatrix([u.key for u in utts], values)
    elif args.kind == "ne":
        if args.ne_sidecar:
            tagger = SidecarTagger.load(args.ne_sidecar)
            inputs.append(Path(args.ne_sidecar))
        else:
            tagger = RegexTagger()
        fm = FeatureMatrix([u.key for u in utts], ne_matrix(utts, tagger).astype(float))
    else:
        refs = _load_segments(args.corpus, corpus)
        cfg = _mfcc_config(args)
        gate = _gate_config(args) if args.denoise else None
        cache: dict[Path, Waveform] = {}
        for path in sorted({_audio_file(args.corpus, r.audio_path) for r in refs}):
            cache[path] = read_wav(path)
            inputs.append(path)
        rows = parallel_map(
            lambda r: (r.key, segment_features(cache[_audio_file(args.corpus, r.audio_path)], r,
                                               cfg, gate)), refs)
        fm = FeatureMatrix.from_rows(rows)
        if not args.raw:
            train_keys = [u.key for u in corpus.utterances("train") if u.key in fm]
            fm = standardize(fm, train_keys)
    write_feature_csv(fm, out)
    print(f"{args.kind}: {len(fm)} rows x {fm.dim} features -> {out}")
    return inputs, outputs


def _train_rows(args, corpus: Corpus):
    """Training utterances: variant files if given, else the variant built in memory."""
    if args.variant_dir:
        spec = VariantSpec.parse(args.variant, args.seed)
        rows = []
        for e in corpus.split("train"):
            rows += load_variant_rows(Path(args.variant_dir) / f"{e.event_id}.{spec.suffix}.tsv",
                                      e.event_id)
        return rows
    return make_variant(corpus.utterances("train"), VariantSpec.parse(args.variant, args.seed))


def cmd_train(args):
    corpus = load_corpus(args.corpus)
    fm = read_feature_csv(args.features)
    rows = _train_rows(args, corpus)
    train = _labeled(corpus, fm, "train", rows)
    dev = _labeled(corpus, fm, "dev")
    spec = MlpSpec(fm.dim, args.hidden, dropout=args.dropout)
    cfg = _train_config(args)
    meta = {"role": "classifier", "features": Path(args.features).name, "variant": args.variant}
    ckpt = train_classifier(train, dev, spec, cfg, args.loss, meta=meta)
    if args.teacher:
        TeacherBundle.freeze(ckpt).save(args.out)
    else:
        ckpt.save(args.out)
    print(f"epoch {ckpt.epoch} selected, dev MAP {ckpt.dev_map:.4f} -> {args.out}")
    inputs = [Path(args.corpus), Path(args.features)]
    if args.variant_dir:
        inputs.append(Path(args.variant_dir))
    return inputs, [Path(args.out)]


def _load_teacher(path) -> TeacherBundle:
    ckpt = Checkpoint.load(path)
    if "teacher_fingerprint" in ckpt.meta:
        return TeacherBundle.load(path)
    return TeacherBundle.freeze(ckpt)


def cmd_align(args):
    corpus = load_corpus(args.corpus)
    teacher = _load_teacher(args.teacher)
    text = read_feature_csv(args.text_features)
    audio = read_feature_csv(args.audio_features)
    reps = extract_teacher_reps(teacher, text)
    train = _labeled(corpus, audio, "train")
    dev = _labeled(corpus, audio, "dev")
    hidden = args.hidden if args.hidden is not None else teacher.spec.hidden_dims
    spec = MlpSpec(audio.dim, hidden, dropout=args.dropout)
    ckpt = train_aligned_student(train, dev, teacher, reps, spec, _train_config(args))
    ckpt.save(args.out)
    outputs = [Path(args.out)]
    if args.teacher_reps_out:
        write_feature_csv(reps, args.teacher_reps_out)
        outputs.append(Path(args.teacher_reps_out))
    mse = alignment_mse(ckpt, reps, audio, dev.keys)
    print(f"epoch {ckpt.epoch} selected, dev MAP {ckpt.dev_map:.4f}, dev alignment MSE {mse:.6f}"
          f" -> {args.out}")
    return [Path(args.corpus), Path(args.teacher), Path(args.text_features),
            Path(args.audio_features)], outputs


def _fusion_pipeline(mode, args) -> tuple[FusionPipeline, FeatureMatrix, FeatureMatrix]:
    pipe = FusionPipeline(mode, Checkpoint.load(args.text_ckpt), Checkpoint.load(args.audio_ckpt))
    return pipe, read_feature_csv(args.text_features), read_feature_csv(args.audio_features)


def cmd_fuse(args):
    overrides = {}
    if args.hidden is not None:
        overrides["hidden_dims"] = args.hidden
    if args.dropout is not None:
        overrides["dropout"] = args.dropout
    for name, value in (("learning_rate", args.lr), ("epochs", args.epochs)):
        if value is not None:
            overrides[name] = value
    overrides["seed"] = args.seed
    spec = preset(args.preset, **overrides)
    corpus = load_corpus(args.corpus)
    pipe, text, audio = _fusion_pipeline(spec.mode, args)
    before = pipe.fingerprints()
    sets = {}
    for split in ("train", "dev"):
        keys = [u.key for u in corpus.utterances(split)]
        try:
            sets[split] = pipe.labeled(text, audio, keys, [u.label for u in corpus.utterances(split)])
        except KeyError as exc:
            raise ValidationError(f"feature files do not cover the {split} split: {exc.args[0]}") from None
    tdim, adim = pipe.text.spec.rep_dim, pipe.audio.spec.rep_dim
    head = train_fusion_head(sets["train"], sets["dev"], spec, tdim, adim)
    if pipe.fingerprints() != before:
        raise ClaimrankError("base model changed during fusion training")
    head.meta = dict(head.meta, preset=args.preset, text_fingerprint=before[0],
                     audio_fingerprint=before[1])
    head.save(args.out)
    outputs = [Path(args.out)]
    if args.fused_out:
        keys = [u.key for u in corpus.utterances()]
        write_feature_csv(FeatureMatrix(keys, pipe.features(text, audio, keys)), args.fused_out)
        outputs.append(Path(args.fused_out))
    print(f"{spec.mode} fusion: epoch {head.epoch} selected, dev MAP {head.dev_map:.4f} -> {args.out}")
    return [Path(args.corpus), Path(args.text_ckpt), Path(args.audio_ckpt),
            Path(args.text_features), Path(args.audio_features)], outputs


def cmd_predict(args):
    corpus = load_corpus(args.corpus)
    keys = [u.key for u in corpus.utterances(args.split)]
    if args.head:
        head = Checkpoint.load(args.head)
        mode = head.meta.get("mode")
        if not (args.text_ckpt and args.audio_ckpt and args.text_features and args.audio_features):
            raise UsageError("fused prediction needs --text-ckpt, --audio-ckpt, --text-features "
                             "and --audio-features")
        pipe, text, audio = _fusion_pipeline(mode, args)
        for role, ckpt in (("text", pipe.text), ("audio", pipe.audio)):
            stored = head.meta.get(f"{role}_fingerprint")
            if stored and stored != ckpt.fingerprint():
                raise ValidationError(f"{role} checkpoint is not the one the fusion head was trained on")
        pipe.head = head
        try:
            scores = head.model().predict_proba(pipe.features(text, audio, keys))
        except KeyError as exc:
            raise ValidationError(f"feature files do not cover the {args.split} split: {exc.args[0]}") from None
        inputs = [Path(args.head), Path(args.text_ckpt), Path(args.audio_ckpt),
                  Path(args.text_features), Path(args.audio_features)]
    else:
        if not (args.ckpt and args.features):
            raise UsageError("predict needs --ckpt and --features (or --head for fusion)")
        fm = read_feature_csv(args.features)
        data = _labeled(corpus, fm, args.split)
        scores = Checkpoint.load(args.ckpt).model().predict_proba(data.x)
        inputs = [Path(args.ckpt), Path(args.features)]
    preds = [Prediction(e, l, float(s)) for (e, l), s in zip(keys, scores)]
    write_predictions(preds, args.out)
    print(f"{len(preds)} predictions -> {args.out}")
    return [Path(args.corpus)] + inputs, [Path(args.out)]


def cmd_eval(args):
    corpus = load_corpus(args.corpus)
    preds = read_predictions(args.predictions)
    meta = {"predictions_sha256": file_sha256(args.predictions), "seed": args.seed}
    if args.run_id:
        meta["run_id"] = args.run_id
    report = map_over_events(preds, corpus, args.split, meta)
    outputs = []
    if args.out:
        write_report(report, args.out)
        outputs.append(Path(args.out))
    print(f"MAP {report.map:.4f} over {len(report.per_event)} event(s)"
          + (f"; excluded {', '.join(report.excluded_events)}" if report.excluded_events else ""))
    return [Path(args.corpus), Path(args.predictions)], outputs


def cmd_report(args):
    reports = {}
    inputs = []
    for item in args.reports:
        run_id, sep, path = item.partition("=")
        if not sep:
            path, run_id = item, Path(item).stem
        if run_id in reports:
            raise ValidationError(f"duplicate run id {run_id!r}")
        reports[run_id] = read_report(path)
        inputs.append(Path(path))
    text = format_comparison(compare_runs(reports))
    outputs = []
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        outputs.append(Path(args.out))
    print(text, end="")
    return inputs, outputs


def _gradcheck_objectives(loss: str, lam: float, rep_dim: int, n: int, rng):
    targets = rng.normal(size=(n, rep_dim))
    table = {
        "ce": lambda: CrossEntropy(),
        "hinge": lambda: Hinge(),
        "mse": lambda: RepresentationMSE(targets),
        "composite": lambda: Composite(targets, lam),
    }
    if loss == "all":
        out = [(name, make()) for name, make in table.items() if name != "composite"]
        out += [(f"composite@{l:g}", Composite(targets, l)) for l in (0.0, 0.25, 0.75, 1.0)]
        return out
    return [(loss, table[loss]())]


def cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    spec = MlpSpec(args.input_dim, args.hidden)
    model = Mlp.init(spec, rng)
    x = rng.normal(size=(args.batch, args.input_dim))
    y = rng.integers(0, 2, size=args.batch)
    worst = 0.0
    for name, objective in _gradcheck_objectives(args.loss, args.lam, spec.rep_dim, args.batch, rng):
        err = gradcheck(model, objective, x, y, h=args.step)
        worst = max(worst, err)
        print(f"{name:<16} max relative error {err:.3e}")
    if not worst <= args.tol:
        raise NumericalError(f"gradient check failed: {worst:.3e} > {args.tol:g}")
    return [], []


def cmd_pipeline(args):
    """ingest -> variant -> features -> train -> predict -> eval, all under ``--out``."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_log = args.run_log or str(out / RUN_LOG_NAME)
    corpus_dir = out / "corpus"
    common = ["--run-log", run_log]
    hidden = ",".join(str(h) for h in args.hidden)
    stages = [
        ["ingest", "--transcripts", args.corpus, "--out", str(corpus_dir)]
        + (["--segments", str(_segments_path(args.corpus))]
           if _segments_path(args.corpus).exists() else []),
        ["variant", "--corpus", str(corpus_dir), "--kind", args.variant, "--seed", str(args.seed),
         "--out", str(out / "variants")],
        ["features", "--corpus", str(corpus_dir), "--kind", args.features,
         "--out", str(out / "features.csv")],
        ["train", "--corpus", str(corpus_dir), "--features", str(out / "features.csv"),
         "--variant", args.variant, "--variant-dir", str(out / "variants"),
         "--hidden", hidden, "--dropout", str(args.dropout), "--lr", repr(args.lr),
         "--epochs", str(args.epochs), "--batch-size", str(args.batch_size),
         "--loss", args.loss, "--seed", str(args.seed), "--out", str(out / "model.ckpt")],
        ["predict", "--corpus", str(corpus_dir), "--ckpt", str(out / "model.ckpt"),
         "--features", str(out / "features.csv"), "--split", args.split,
         "--out", str(out / "predictions.tsv")],
        ["eval", "--corpus", str(corpus_dir), "--predictions", str(out / "predictions.tsv"),
         "--split", args.split, "--seed", str(args.seed), "--out", str(out / "report.json")],
    ]
    for argv in stages:
        code = run(argv[:1] + common + argv[1:])
        if code != EXIT_OK:
            raise _StageFailed(code, argv[0])
    return [Path(args.corpus)], [out / "predictions.tsv", out / "report.json"]


class _StageFailed(Exception):
    def __init__(self, code, stage):
        super().__init__(f"pipeline stage {stage!r} failed")
        self.code = code


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p, lr_default=1e-3, hidden_default="32,16"):
    p.add_argument("--hidden", type=_int_list, default=_int_list(hidden_default) if hidden_default is not None else None,
                   help="comma-separated hidden layer widths (default: %(default)s)")
    p.add_argument("--dropout", type=float, default=0.0, help="dropout after each hidden layer (default: %(default)s)")
    p.add_argument("--lr", type=float, default=lr_default, help="peak learning rate (default: %(default)s)")
    p.add_argument("--lr-preset", choices=sorted(LR_PRESETS), default=None,
                   help="named learning rate; overrides --lr (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=15, help="training epochs (default: %(default)s)")
    p.add_argument("--warmup", type=float, default=0.1, help="warmup proportion of steps (default: %(default)s)")
    p.add_argument("--weight-decay", type=float, default=0.02, help="AdamW weight decay (default: %(default)s)")
    p.add_argument("--batch-size", type=int, default=32, help="mini-batch size (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")


def _add_gate_flags(p):
    d = NoiseGateConfig()
    p.add_argument("--n-fft", type=int, default=d.n_fft, help="STFT size (default: %(default)s)")
    p.add_argument("--hop", type=int, default=d.hop, help="STFT hop (default: %(default)s)")
    p.add_argument("--n-std-thresh", type=float, default=d.n_std_thresh,
                   help="threshold in standard deviations above the mean (default: %(default)s)")
    p.add_argument("--prop-decrease", type=float, default=d.prop_decrease,
                   help="attenuation applied to gated cells (default: %(default)s)")
    p.add_argument("--freq-smooth-bins", type=int, default=d.freq_smooth_bins,
                   help="mask smoothing half-width in bins (default: %(default)s)")
    p.add_argument("--time-smooth-frames", type=int, default=d.time_smooth_frames,
                   help="mask smoothing half-width in frames (default: %(default)s)")
    p.add_argument("--noise-floor-bins", type=int, default=d.noise_floor_bins,
                   help="median half-width for the per-frequency threshold; 0 = per bin (default: %(default)s)")


def _add_mfcc_flags(p):
    d = MfccConfig()
    p.add_argument("--win-ms", type=float, default=d.win_ms, help="analysis window in ms (default: %(default)s)")
    p.add_argument("--hop-ms", type=float, default=d.hop_ms, help="frame hop in ms (default: %(default)s)")
    p.add_argument("--n-mels", type=int, default=d.n_mels, help="mel filters (default: %(default)s)")
    p.add_argument("--n-mfcc", type=int, default=d.n_coeffs, help="cepstral coefficients kept (default: %(default)s)")
    p.add_argument("--preemphasis", type=float, default=d.preemphasis, help="pre-emphasis coefficient (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="claimrank", description="Check-worthiness ranking over transcripts and audio.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file; flags override it (default: %(default)s)")
    common.add_argument("--run-log", default=None,
                        help="provenance log to append to (default: run.log next to the output)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("fixture", cmd_fixture, "Generate a synthetic corpus directory.")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--kind", choices=("toy", "full-scale", "complementary"), default="toy",
                   help="fixture family (default: %(default)s)")
    p.add_argument("--events", type=int, default=None, help="number of events (default: 5 for toy, 200 for complementary)")
    p.add_argument("--sentences", type=int, default=None, help="sentences per event (default: 40 for toy, 50 for complementary)")
    p.add_argument("--positive-rate", type=_unit_float, default=None, help="check-worthy rate (default: 0.2 for toy, 0.1 for complementary)")
    p.add_argument("--audio", action="store_true", help="also synthesize recordings and a segment map (default: %(default)s)")
    p.add_argument("--sample-rate", type=int, default=16000, help="recording sample rate (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")

    p = add("ingest", cmd_ingest, "Validate transcripts and a split manifest into a corpus directory.")
    p.add_argument("--transcripts", required=True, help="directory holding <event_id>.tsv transcripts")
    p.add_argument("--manifest", default=None, help="split manifest (default: <transcripts>/splits.tsv)")
    p.add_argument("--segments", default=None, help="segment map TSV (default: %(default)s)")
    p.add_argument("--out", required=True, help="output corpus directory")

    p = add("stats", cmd_stats, "Print per-split event, sentence and check-worthy counts.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--speaker", default=None, help="restrict to one speaker (default: %(default)s)")
    p.add_argument("--out", default=None, help="also write the table here (default: %(default)s)")

    p = add("variant", cmd_variant, "Write a rebalanced training variant (x15, x30, 1to1, ...).")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--kind", default="original", help="original, x<k> or 1to1 (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed for 1to1 undersampling (default: %(default)s)")
    p.add_argument("--out", default=None, help="output directory (default: <corpus>/variants)")

    p = add("filter-speaker", cmd_filter_speaker, "Keep only one speaker's sentences.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--speaker", required=True, help="speaker name, matched exactly after trimming")
    p.add_argument("--out", required=True, help="output corpus directory")

    p = add("denoise", cmd_denoise, "Spectral-gate noise reduction, per segment or per file.")
    p.add_argument("--corpus", default=None, help="corpus directory with a segment map (default: %(default)s)")
    p.add_argument("--input", default=None, help="single WAV to denoise instead (default: %(default)s)")
    p.add_argument("--output", default=None, help="output WAV for --input (default: <input>.denoised.wav)")
    _add_gate_flags(p)

    p = add("segment", cmd_segment, "Cut each utterance's audio segment (capped) into its own WAV.")
    p.add_argument("--corpus", required=True, help="corpus directory with a segment map")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-seconds", type=float, default=MAX_SEGMENT_SECONDS,
                   help="truncation length in seconds (default: %(default)s)")
    p.add_argument("--denoised", action="store_true",
                   help="cut from the .denoised.wav recordings (default: %(default)s)")

    p = add("features", cmd_features, "Extract TF.IDF, entity-count or pooled MFCC features.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--kind", choices=("tfidf", "ne", "mfcc"), default="tfidf", help="feature family (default: %(default)s)")
    p.add_argument("--out", required=True, help="output feature CSV")
    p.add_argument("--min-df", type=int, default=1, help="TF.IDF minimum document frequency (default: %(default)s)")
    p.add_argument("--tfidf-model", default=None, help="reuse a saved TF.IDF model prefix (default: fit on train)")
    p.add_argument("--ne-sidecar", default=None, help="entity annotation TSV (default: regex tagger)")
    p.add_argument("--denoise", action="store_true", help="denoise each segment before MFCC (default: %(default)s)")
    p.add_argument("--raw", action="store_true",
                   help="skip z-scoring MFCC columns with train-split statistics (default: %(default)s)")
    _add_mfcc_flags(p)
    _add_gate_flags(p)

    p = add("train", cmd_train, "Train a feed-forward classifier with dev-MAP checkpoint selection.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--features", required=True, help="feature CSV covering train and dev")
    p.add_argument("--out", required=True, help="output checkpoint")
    p.add_argument("--variant", default="original", help="training variant (default: %(default)s)")
    p.add_argument("--variant-dir", default=None, help="read variant files from here (default: build in memory)")
    p.add_argument("--loss", choices=("ce", "hinge"), default="ce", help="training loss (default: %(default)s)")
    p.add_argument("--teacher", action="store_true", help="freeze and save as a teacher bundle (default: %(default)s)")
    _add_train_flags(p)

    p = add("align", cmd_align, "Train an audio student aligned to a frozen text teacher.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--teacher", required=True, help="teacher checkpoint")
    p.add_argument("--text-features", required=True, help="teacher's feature CSV")
    p.add_argument("--audio-features", required=True, help="student's feature CSV")
    p.add_argument("--out", required=True, help="output student checkpoint")
    p.add_argument("--lambda", dest="lam", type=_unit_float, default=0.75,
                   help="alignment-loss weight (default: %(default)s)")
    p.add_argument("--teacher-reps-out", default=None, help="also write teacher representations (default: %(default)s)")
    _add_train_flags(p, hidden_default=None)
    p.set_defaults(hidden=None)

    p = add("fuse", cmd_fuse, "Train an early or late fusion head over two frozen base models.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--preset", choices=sorted(FUSION_PRESETS), default="late-small", help="fusion preset (default: %(default)s)")
    p.add_argument("--text-ckpt", required=True, help="text model checkpoint")
    p.add_argument("--audio-ckpt", required=True, help="audio model checkpoint")
    p.add_argument("--text-features", required=True, help="text feature CSV")
    p.add_argument("--audio-features", required=True, help="audio feature CSV")
    p.add_argument("--out", required=True, help="output fusion-head checkpoint")
    p.add_argument("--fused-out", default=None, help="also write fused feature CSV (default: %(default)s)")
    p.add_argument("--hidden", type=_int_list, default=None, help="override head hidden widths (default: preset)")
    p.add_argument("--dropout", type=float, default=None, help="override head dropout (default: preset)")
    p.add_argument("--lr", type=float, default=None, help="override head learning rate (default: preset)")
    p.add_argument("--epochs", type=int, default=None, help="override epochs (default: preset)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")

    p = add("predict", cmd_predict, "Score a split with a classifier or a fusion head.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test", help="split to score (default: %(default)s)")
    p.add_argument("--out", required=True, help="output predictions TSV")
    p.add_argument("--ckpt", default=None, help="classifier checkpoint (default: %(default)s)")
    p.add_argument("--features", default=None, help="feature CSV for --ckpt (default: %(default)s)")
    p.add_argument("--head", default=None, help="fusion-head checkpoint (default: %(default)s)")
    p.add_argument("--text-ckpt", default=None, help="text model for --head (default: %(default)s)")
    p.add_argument("--audio-ckpt", default=None, help="audio model for --head (default: %(default)s)")
    p.add_argument("--text-features", default=None, help="text features for --head (default: %(default)s)")
    p.add_argument("--audio-features", default=None, help="audio features for --head (default: %(default)s)")

    p = add("eval", cmd_eval, "Per-event AP and MAP of a predictions file.")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--predictions", required=True, help="predictions TSV")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test", help="split to evaluate (default: %(default)s)")
    p.add_argument("--out", default=None, help="report JSON (default: %(default)s)")
    p.add_argument("--run-id", default=None, help="label stored in the report (default: %(default)s)")
    p.add_argument("--seed", type=int, default=None, help="seed of the run being evaluated (default: %(default)s)")

    p = add("report", cmd_report, "Rank evaluation reports by MAP x 100.")
    p.add_argument("reports", nargs="+", help="report files, optionally as RUN_ID=PATH")
    p.add_argument("--out", default=None, help="also write the table here (default: %(default)s)")

    p = add("gradcheck", cmd_gradcheck, "Compare analytic and finite-difference gradients.")
    p.add_argument("--input-dim", type=int, default=6, help="input width (default: %(default)s)")
    p.add_argument("--hidden", type=_int_list, default=_int_list("5,4"), help="hidden widths (default: 5,4)")
    p.add_argument("--loss", choices=("ce", "hinge", "mse", "composite", "all"), default="all",
                   help="objective to check (default: %(default)s)")
    p.add_argument("--lambda", dest="lam", type=_unit_float, default=0.75,
                   help="composite weight when --loss composite (default: %(default)s)")
    p.add_argument("--batch", type=int, default=5, help="rows in the check batch (default: %(default)s)")
    p.add_argument("--step", type=float, default=1e-4, help="finite-difference step (default: %(default)s)")
    p.add_argument("--tol", type=float, default=1e-4, help="maximum relative error (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")

    p = add("pipeline", cmd_pipeline, "Run ingest, variant, features, train, predict and eval in one go.")
    p.add_argument("--corpus", required=True, help="source directory with transcripts and splits.tsv")
    p.add_argument("--out", required=True, help="output directory for every stage")
    p.add_argument("--variant", default="original", help="training variant (default: %(default)s)")
    p.add_argument("--features", choices=("tfidf", "ne"), default="tfidf", help="text features (default: %(default)s)")
    p.add_argument("--loss", choices=("ce", "hinge"), default="ce", help="training loss (default: %(default)s)")
    p.add_argument("--split", choices=("dev", "test"), default="test", help="split to evaluate (default: %(default)s)")
    p.add_argument("--hidden", type=_int_list, default=_int_list("32,16"), help="hidden widths (default: 32,16)")
    p.add_argument("--dropout", type=float, default=0.0, help="dropout (default: %(default)s)")
    p.add_argument("--lr", type=float, default=1e-3, help="peak learning rate (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=15, help="training epochs (default: %(default)s)")
    p.add_argument("--batch-size", type=int, default=32, help="mini-batch size (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, args) -> None:
    """Install values from ``args.config`` as defaults of the chosen subcommand."""
    path = Path(args.config)
    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:  # OSError -> exit 2
        try:
            cp.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
    sub = next(a for a in parser._subparsers._group_actions if isinstance(a, argparse._SubParsersAction))
    if args.command not in sub.choices:
        return  # argparse reports the bad subcommand
    p = sub.choices[args.command]
    actions = {a.dest: a for a in p._actions}
    values = {}
    for section in ("run", args.command):
        if cp.has_section(section):
            values.update(cp[section])
    defaults = {}
    for key, raw in values.items():
        dest = key.strip().replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise ConfigError(f"{path}: unknown setting {key!r} for '{args.command}'")
        if isinstance(action, argparse._StoreTrueAction):
            if raw.strip().lower() not in cp.BOOLEAN_STATES:
                raise ConfigError(f"{path}: {key} must be a boolean, got {raw!r}")
            defaults[dest] = cp.BOOLEAN_STATES[raw.strip().lower()]
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw.strip())
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"{path}: bad value for {key}: {exc}") from None
        else:
            defaults[dest] = raw.strip()
        if action.choices is not None and defaults[dest] not in action.choices:
            raise ConfigError(f"{path}: {key} must be one of {sorted(action.choices)}")
        if action.required:
            action.required = False
    p.set_defaults(**defaults)


def _prescan(argv) -> tuple[str | None, str | None]:
    """Subcommand name and ``--config`` value, found before full parsing."""
    command = config = None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            config = next(it, None)
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-"):
            command = tok
    return command, config


def _parse(argv):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    command, config = _prescan(argv)
    if config and command:
        _apply_config(parser, argparse.Namespace(command=command, config=config))
    return parser.parse_args(argv)


def run(argv=None) -> int:
    """Execute one command line and return its exit code."""
    try:
        args = _parse(argv)
        worker_count()  # reject a bad CLAIMRANK_THREADS before doing any work
        for name in ("out", "output", "fused_out", "teacher_reps_out"):
            if getattr(args, name, None):
                Path(getattr(args, name)).parent.mkdir(parents=True, exist_ok=True)
        inputs, outputs = args.func(args)
        if args.command != "pipeline":
            write_provenance(args, inputs, outputs)
        return EXIT_OK
    except _StageFailed as exc:
        return exc.code
    except NumericalError as exc:
        print(f"claimrank: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"claimrank: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ClaimrankError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"claimrank: error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"claimrank: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None) -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
