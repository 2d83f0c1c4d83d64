"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data/validation error.
Results go to stdout as ``key=value`` lines; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from . import FORMAT_VERSION, __version__
from . import analysis, augment, calib, corpus, dsp, localize, metrics, synthbench
from .config import ConfigError, read_config, serialize_config
from .errors import DataError, MissingInKey
from .io_utils import atomic_write_text, atomic_write_bytes

logger = logging.getLogger("spoofkit")

COMMANDS = ("eval", "calibrate", "fuse", "augment", "featurize", "localize-eval", "det", "rcq",
            "synth", "toy-train", "toy-score")

# augmentation chain parameters accepted as "<step>.<name>" keys in [augment]
CHAIN_PARAMS = {
    "rawboost": {f.name for f in fields(augment.RawBoostParams)} - {"seed"},
    "noise": {"snr_db"},
    "rir": set(),
    "speed": {"factors"},
    "mulaw": {"mu", "bits"},
    "codec_cmd": {"command"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    return f"{x:.6f}"


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


# ---------------------------------------------------------------------------
# shared helpers


def _out(path, text: str) -> None:
    atomic_write_text(path, text)


def _echo_config(args, target: str | None, is_dir: bool = False) -> None:
    if not target:
        return
    path = os.path.join(target, f"{args.command}.cfg") if is_dir else f"{target}.cfg"
    values = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "command", "config", "chain_params") and v is not None}
    values.update(getattr(args, "chain_params", {}) or {})
    _out(path, serialize_config({args.command: values}))


def _cost(args) -> metrics.CostParams:
    return metrics.CostParams(args.ptarget, args.cmiss, args.cfa)


def _scores(args, path, semantics="raw") -> corpus.ScoreSet:
    ss = corpus.read_scores(path, semantics)
    if args.flip:
        ss = corpus.ScoreSet({u: -s for u, s in ss.entries.items()},
                             "raw" if semantics == "posterior" else semantics)
    return ss


def _require(args, *names):
    for name in names:
        if getattr(args, name) in (None, []):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _pmap(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def read_manifest(path) -> dict[str, str]:
    """``<utt-id> <wav>`` or ``<wav>`` lines; ids default to the file stem."""
    base = os.path.dirname(os.path.abspath(path))
    out: dict[str, str] = {}
    for line_no, line in enumerate(corpus.read_text(path).splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) == 1:
            utt, wav = os.path.splitext(os.path.basename(parts[0]))[0], parts[0]
        elif len(parts) == 2:
            utt, wav = parts
        else:
            raise corpus.MalformedLine(line_no, line)
        if utt in out:
            raise corpus.DuplicateUtterance(utt)
        out[utt] = wav if os.path.isabs(wav) else os.path.join(base, wav)
    if not out:
        raise corpus.EmptyInput("manifest")
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval(args):
    _require(args, "scores", "key")
    semantics = "llr" if args.llr else "raw"
    key = corpus.read_key(args.key)
    bona, spoof = corpus.join_scores_with_key(_scores(args, args.scores, semantics), key,
                                              strict=not args.lenient)
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for name in names:
        if name not in metrics.METRICS:
            raise UsageError(f"unknown metric {name!r}; choose from {','.join(metrics.METRICS)}")
    res = metrics.compute_metrics(bona, spoof, names, _cost(args), semantics)
    for name in names:
        print(f"{name}={_fmt(res[name])}")
    if args.summary:
        res.update(n_bonafide=int(bona.size), n_spoof=int(spoof.size))
        _out(args.summary, json.dumps(res, indent=2, sort_keys=True) + "\n")
        _echo_config(args, args.summary)
    return 0


def _load_llr_input(args, path):
    if args.input == "posterior":
        ss = corpus.read_scores(path, "posterior")
        llr, n = calib.posterior_to_llr(ss.values(), args.train_prior)
        if n:
            logger.warning("%s: clamped %d saturated posteriors", path, n)
        ss = corpus.ScoreSet(dict(zip(ss.ids(), map(float, llr))), "llr")
        if args.flip:
            ss = corpus.ScoreSet({u: -s for u, s in ss.entries.items()}, "llr")
        return ss
    return _scores(args, path, args.input)


def cmd_calibrate(args):
    _require(args, "dev_scores", "dev_key", "output")
    if args.eval_scores and not args.out_scores:
        raise UsageError("--out-scores is required with --eval-scores")
    key = corpus.read_key(args.dev_key)
    dev = _load_llr_input(args, args.dev_scores)
    mat, is_bona, _ = calib.stack_for_training([dev], key)
    prior = args.prior if args.prior is not None else _cost(args).effective_prior
    cal = calib.train_affine(mat, is_bona, prior, smooth_targets=args.smooth)
    _out(args.output, calib.serialize_calibrator(cal))
    _echo_config(args, args.output)
    if args.eval_scores:
        ev = _load_llr_input(args, args.eval_scores)
        out = calib.apply_affine_scores(cal, [ev])
        _out(args.out_scores, corpus.serialize_scores(out.sorted()))
    print("weights=" + ",".join(_fmt(w) for w in cal.weights))
    print(f"bias={_fmt(cal.bias)}")
    print(f"prior={_fmt(cal.prior)}")
    print(f"converged={int(cal.converged)}")
    return 0


def cmd_fuse(args):
    _require(args, "dev_scores", "eval_scores", "output")
    if len(args.dev_scores) != len(args.eval_scores):
        raise UsageError("need the same number of --dev-scores and --eval-scores files")
    dev = [_scores(args, p) for p in args.dev_scores]
    ev = [_scores(args, p) for p in args.eval_scores]
    if args.method == "avg":
        norms = calib.fit_average_fusion(dev)
        fused = calib.apply_average_fusion(norms, ev)
        model = "".join(f"minmax {n.low!r} {n.high!r}\n" for n in norms)
    else:
        _require(args, "dev_key")
        key = corpus.read_key(args.dev_key)
        mat, is_bona, _ = calib.stack_for_training(dev, key)
        prior = args.prior if args.prior is not None else _cost(args).effective_prior
        cal = calib.train_affine(mat, is_bona, prior, smooth_targets=args.smooth)
        fused = calib.apply_affine_scores(cal, ev)
        model = calib.serialize_calibrator(cal)
    _out(args.output, corpus.serialize_scores(fused.sorted()))
    if args.model:
        _out(args.model, model)
    _echo_config(args, args.output)
    print(f"method={args.method}")
    print(f"systems={len(dev)}")
    print(f"trials={len(fused)}")
    return 0


def _chain_steps(args) -> list[augment.AugmentStep]:
    names = [n.strip() for n in (args.chain or "").split(",") if n.strip()]
    steps = []
    for name in names:
        if name not in CHAIN_PARAMS:
            raise UsageError(f"unknown augmentation step {name!r}")
        prm = {}
        for k, v in (args.chain_params or {}).items():
            step, _, pname = k.partition(".")
            if step != name:
                continue
            if pname in ("command", "algorithm"):
                prm[pname] = v
            elif pname in ("n_orders",):
                prm[pname] = int(v)
            elif pname in ("impulse_prob", "impulse_gain", "mu", "bits"):
                prm[pname] = float(v)
            elif pname in ("n_notch", "noise_n_notch", "fir_taps"):
                prm[pname] = tuple(int(x) for x in _float_list(v))
            elif pname == "factors":
                prm[pname] = tuple(_float_list(v))
            else:
                prm[pname] = tuple(_float_list(v))
        steps.append(augment.AugmentStep(name, prm))
    return steps


def _augment_one(task):
    utt, wav, out_dir, steps, seed, noise_paths, rir_paths = task
    w = dsp.load_audio(wav)
    noises = [dsp.load_audio(p) for p in noise_paths]
    rirs = [dsp.load_audio(p) for p in rir_paths]
    file_seed = augment.derive_seed(seed, utt)
    out, record = augment.apply_chain(w, steps, file_seed, noises, rirs)
    atomic_write_bytes(os.path.join(out_dir, f"{utt}.wav"), dsp.encode_wav(out))
    sidecar = {"utt": utt, "source": os.path.basename(wav), "global_seed": seed,
               "file_seed": file_seed, "chain": record, "n_clipped": out.n_clipped}
    atomic_write_text(os.path.join(out_dir, f"{utt}.json"),
                      json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return out.n_clipped


def cmd_augment(args):
    _require(args, "manifest", "out")
    steps = _chain_steps(args)
    if not steps:
        raise UsageError("empty augmentation chain (set --chain or 'chain' in [augment])")
    manifest = read_manifest(args.manifest)
    noises = list(read_manifest(args.noise_list).values()) if args.noise_list else []
    rirs = list(read_manifest(args.rir_list).values()) if args.rir_list else []
    os.makedirs(args.out, exist_ok=True)
    tasks = [(u, manifest[u], args.out, steps, args.seed, noises, rirs) for u in sorted(manifest)]
    clipped = _pmap(_augment_one, tasks, args.jobs)
    _echo_config(args, args.out, is_dir=True)
    print(f"files={len(tasks)}")
    print(f"clipped_samples={sum(clipped)}")
    return 0


def _feature_cfg(args) -> dsp.FeatureConfig:
    return dsp.FeatureConfig(frame_len=args.frame_len, frame_shift=args.frame_shift,
                             window=args.window, n_filters=args.n_filters, n_ceps=args.n_ceps,
                             preemphasis=args.preemphasis)


def _featurize_one(task):
    utt, wav, kind, cfg, deltas = task
    fm = dsp.cepstral_features(dsp.load_audio(wav), kind, cfg=cfg)
    if deltas:
        fm = dsp.add_deltas(fm, deltas)
    return utt, fm


def cmd_featurize(args):
    _require(args, "manifest", "output")
    cfg = _feature_cfg(args)
    if args.kind == "fbank":
        cfg = dsp.FeatureConfig(**{**cfg.__dict__, "n_ceps": min(cfg.n_ceps, cfg.n_filters)})
    manifest = read_manifest(args.manifest)
    tasks = [(u, manifest[u], args.kind, cfg, args.deltas) for u in sorted(manifest)]
    feats = dict(_pmap(_featurize_one, tasks, args.jobs))
    _out(args.output, dsp.serialize_features(feats))
    _echo_config(args, args.output)
    dims = {fm.shape[1] for fm in feats.values()}
    print(f"utterances={len(feats)}")
    print(f"frames={sum(fm.shape[0] for fm in feats.values())}")
    print(f"dim={dims.pop()}")
    return 0


def _restrict(annot: corpus.SegmentAnnotationSet, ids) -> corpus.SegmentAnnotationSet:
    """Annotation subset for ``ids``; an id without annotation is an error."""
    missing = sorted(set(ids) - set(annot))
    if missing:
        raise MissingInKey(missing[0])
    return corpus.SegmentAnnotationSet({u: annot[u] for u in sorted(ids)}, annot.labels)


def _frame_scores(args, path) -> corpus.FrameScoreSet:
    fs = corpus.read_frame_scores(path)
    if args.flip:
        fs = corpus.FrameScoreSet(fs.resolution, {u: -v for u, v in fs.scores.items()})
    return fs


def cmd_localize_eval(args):
    _require(args, "frame_scores", "segments")
    frames = _frame_scores(args, args.frame_scores)
    resolution = args.resolution if args.resolution is not None else frames.resolution
    annot = _restrict(corpus.read_segments(args.segments), frames.scores)
    labels = localize.expand_frame_labels(annot, resolution,
                                          args.threshold)
    res = localize.pooled_point_eer(frames, labels, per_utterance=args.per_utterance)
    print(f"eer={_fmt(res.eer)}")
    print(f"threshold={_fmt(res.threshold)}")
    print(f"n_frames={res.n_frames}")
    print(f"n_truncated={res.n_truncated}")
    if args.per_utterance:
        print(f"n_skipped={res.n_skipped}")
    if args.summary:
        _out(args.summary, json.dumps(res.__dict__, indent=2, sort_keys=True) + "\n")
        _echo_config(args, args.summary)
    return 0


def cmd_det(args):
    _require(args, "scores", "key", "output")
    bona, spoof = corpus.join_scores_with_key(_scores(args, args.scores), corpus.read_key(args.key),
                                              strict=not args.lenient)
    points = analysis.det_points(bona, spoof)
    _out(args.output, analysis.serialize_det(points))
    _echo_config(args, args.output)
    print(f"eer={_fmt(metrics.eer(bona, spoof)[0])}")
    print(f"points={len(points)}")
    return 0


def cmd_rcq(args):
    _require(args, "maps", "segments")
    maps = _frame_scores(args, args.maps)
    segs = _restrict(corpus.read_segments(args.segments), maps.scores)
    if args.speech:
        speech = _restrict(corpus.read_segments(args.speech, corpus.SPEECH_LABELS), maps.scores)
    else:
        speech = corpus.make_segments({u: [(0.0, segs.duration(u), "speech")] for u in segs},
                                      corpus.SPEECH_LABELS)
    resolution = args.resolution if args.resolution is not None else maps.resolution
    types = analysis.segment_type_labels(segs, speech, args.boundary_window, resolution)
    text = analysis.serialize_rcq(analysis.rcq(maps, types))
    sys.stdout.write(text)
    if args.output:
        _out(args.output, text)
        _echo_config(args, args.output)
    return 0


SYNTH_FIELDS = {f.name: f for f in fields(synthbench.SynthConfig)}


def cmd_synth(args):
    _require(args, "out")
    values = {name: getattr(args, name) for name in SYNTH_FIELDS if getattr(args, name) is not None}
    cfg = synthbench.SynthConfig(**values)
    c = synthbench.generate_corpus(cfg)
    synthbench.write_corpus(c, args.out)
    _echo_config(args, args.out, is_dir=True)
    print(f"utterances={len(c.waveforms)}")
    print(f"bonafide={c.key.count(corpus.BONAFIDE)}")
    print(f"spoof={c.key.count(corpus.SPOOF)}")
    return 0


def _load_corpus_dir(path):
    manifest = read_manifest(os.path.join(path, "wav.scp"))
    segs = corpus.read_segments(os.path.join(path, "segments.txt"))
    return manifest, segs


def _split_ids(path, split, manifest):
    if split == "all":
        return sorted(manifest)
    lst = os.path.join(path, f"{split}.lst")
    if not os.path.exists(lst):
        raise UsageError(f"no split list {lst}")
    return [u for u in corpus.read_text(lst).split()]


def cmd_toy_train(args):
    _require(args, "corpus", "output")
    manifest, segs = _load_corpus_dir(args.corpus)
    ids = _split_ids(args.corpus, args.split, manifest)
    waves = {u: dsp.load_audio(manifest[u]) for u in ids}
    cfg = _feature_cfg(args)
    det = synthbench.train_toy_detector(waves, segs, ids, cfg, prior=args.prior,
                                        shuffle_seed=args.shuffle_seed)
    x, is_bona = synthbench.frame_training_set(waves, segs, ids, cfg)
    if args.shuffle_seed is not None:
        is_bona = np.random.default_rng(args.shuffle_seed).permutation(is_bona)
    s = calib.apply_affine(det.calibrator, x)
    _out(args.output, synthbench.serialize_detector(det))
    _echo_config(args, args.output)
    print(f"frames={len(s)}")
    print(f"frame_eer={_fmt(metrics.eer(s[is_bona], s[~is_bona])[0])}")
    return 0


def _toy_score_one(task):
    utt, wav, det, mode, resolution = task
    if mode == "gradient":
        frames = synthbench.score_utterance(det, dsp.load_audio(wav), "frame", resolution)
        fs = synthbench.gradient_maps(corpus.FrameScoreSet(resolution, {utt: frames}))
        return utt, fs.scores[utt]
    return utt, synthbench.score_utterance(det, dsp.load_audio(wav), mode, resolution)


def cmd_toy_score(args):
    _require(args, "model", "corpus", "output")
    det = synthbench.parse_detector(corpus.read_text(args.model))
    manifest = read_manifest(os.path.join(args.corpus, "wav.scp"))
    ids = sorted(_split_ids(args.corpus, args.split, manifest))
    tasks = [(u, manifest[u], det, args.mode, args.resolution) for u in ids]
    results = dict(_pmap(_toy_score_one, tasks, args.jobs))
    if args.mode == "pooled":
        text = corpus.serialize_scores(corpus.ScoreSet(results))
    else:
        text = corpus.serialize_frame_scores(corpus.FrameScoreSet(args.resolution, results))
    _out(args.output, text)
    _echo_config(args, args.output)
    print(f"mode={args.mode}")
    print(f"utterances={len(results)}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_cost(p):
    p.add_argument("--ptarget", type=float, default=0.05, help="bona fide prior")
    p.add_argument("--cmiss", type=float, default=1.0)
    p.add_argument("--cfa", type=float, default=10.0)


def _add_features(p):
    p.add_argument("--frame-len", type=float, default=0.025)
    p.add_argument("--frame-shift", type=float, default=0.01)
    p.add_argument("--window", choices=dsp.WINDOWS, default="hamming")
    p.add_argument("--n-filters", type=int, default=20)
    p.add_argument("--n-ceps", type=int, default=20)
    p.add_argument("--preemphasis", type=float, default=None)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file with [section] per subcommand")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--flip", action="store_true", help="lower scores mean bona fide")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="spoofkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"spoofkit {__version__} (file formats v{FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("eval", cmd_eval, "detection metrics from a score file and a key")
    p.add_argument("--scores")
    p.add_argument("--key")
    p.add_argument("--metrics", default="eer,mindcf")
    p.add_argument("--llr", action="store_true", help="scores are LLRs (needed for actdcf/cllr)")
    p.add_argument("--lenient", action="store_true", help="drop scored trials missing from the key")
    p.add_argument("--summary", help="JSON summary output file")
    _add_cost(p)

    p = add("calibrate", cmd_calibrate, "train an affine LLR calibration on dev scores")
    p.add_argument("--dev-scores")
    p.add_argument("--dev-key")
    p.add_argument("--eval-scores")
    p.add_argument("--out-scores")
    p.add_argument("-o", "--output", help="calibrator model file")
    p.add_argument("--prior", type=float, default=None,
                   help="training prior (default: effective prior of the cost triple)")
    p.add_argument("--input", choices=corpus.SCORE_SEMANTICS, default="raw")
    p.add_argument("--train-prior", type=float, default=0.5,
                   help="bona fide proportion of the network's training data (posterior input)")
    p.add_argument("--smooth", action="store_true", help="smoothed (Platt) training targets")
    _add_cost(p)

    p = add("fuse", cmd_fuse, "average or logistic-regression score fusion")
    p.add_argument("--method", choices=("avg", "lr"), default="lr")
    p.add_argument("--dev-scores", nargs="+")
    p.add_argument("--eval-scores", nargs="+")
    p.add_argument("--dev-key")
    p.add_argument("-o", "--output")
    p.add_argument("--model")
    p.add_argument("--prior", type=float, default=None)
    p.add_argument("--smooth", action="store_true")
    _add_cost(p)

    p = add("augment", cmd_augment, "apply an augmentation chain to a list of WAV files")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--chain", help="comma-separated steps: " + ",".join(CHAIN_PARAMS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-list")
    p.add_argument("--rir-list")

    p = add("featurize", cmd_featurize, "LFCC / Fbank feature extraction")
    p.add_argument("--manifest")
    p.add_argument("-o", "--output")
    p.add_argument("--kind", choices=("lfcc", "fbank"), default="lfcc")
    p.add_argument("--deltas", type=int, choices=(0, 1, 2), default=0)
    _add_features(p)

    p = add("localize-eval", cmd_localize_eval, "point-based EER of frame scores")
    p.add_argument("--frame-scores")
    p.add_argument("--segments")
    p.add_argument("--resolution", type=float, default=None)
    p.add_argument("--threshold", type=float, default=0.0, help="spoof overlap ratio threshold")
    p.add_argument("--per-utterance", action="store_true")
    p.add_argument("--summary")

    p = add("det", cmd_det, "export DET curve points in probit space")
    p.add_argument("--scores")
    p.add_argument("--key")
    p.add_argument("-o", "--output")
    p.add_argument("--lenient", action="store_true")

    p = add("rcq", cmd_rcq, "relative contribution per segment type")
    p.add_argument("--maps", help="contribution maps in frame-score format")
    p.add_argument("--segments")
    p.add_argument("--speech", help="speech/nonspeech segment file (default: all speech)")
    p.add_argument("--boundary-window", type=float, default=0.1)
    p.add_argument("--resolution", type=float, default=None)
    p.add_argument("-o", "--output")

    p = add("synth", cmd_synth, "generate a synthetic partial-fake corpus")
    p.add_argument("--out")
    for name, f in SYNTH_FIELDS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name,
                       type=int if f.type in ("int", int) else float, default=None)

    p = add("toy-train", cmd_toy_train, "train the toy frame-level detector")
    p.add_argument("--corpus")
    p.add_argument("--split", default="train")
    p.add_argument("-o", "--output")
    p.add_argument("--prior", type=float, default=0.5)
    p.add_argument("--shuffle-seed", type=int, default=None)
    _add_features(p)

    p = add("toy-score", cmd_toy_score, "score utterances or frames with the toy detector")
    p.add_argument("--model")
    p.add_argument("--corpus")
    p.add_argument("--split", default="eval")
    p.add_argument("--mode", choices=("pooled", "frame", "gradient"), default="pooled",
                   help="utterance scores, frame scores, or |frame-score gradient| maps")
    p.add_argument("--resolution", type=float, default=localize.DEFAULT_RESOLUTION)
    p.add_argument("-o", "--output")
    return parser, subs


def _convert(action: argparse.Action, value: str):
    if action.nargs == 0:  # store_true
        low = value.lower()
        if low not in ("1", "0", "true", "false", "yes", "no"):
            raise ConfigError(f"{action.dest}: expected a boolean, got {value!r}")
        return low in ("1", "true", "yes")
    items = value.split() if action.nargs in ("+", "*") else [value]
    conv = [action.type(v) if action.type else v for v in items]
    if action.choices is not None and any(c not in action.choices for c in conv):
        raise ConfigError(f"{action.dest}: {value!r} not in {list(action.choices)}")
    return conv if action.nargs in ("+", "*") else conv[0]


def _apply_config(args, parser, subs, argv):
    sections = read_config(args.config)
    for name in sections:
        if name not in COMMANDS:
            raise ConfigError(f"unknown config section [{name}]")
    section = sections.get(args.command, {})
    sp = subs[args.command]
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults, chain_params = {}, {}
    for key, value in section.items():
        if args.command == "augment" and "." in key:
            step, _, pname = key.partition(".")
            if step not in CHAIN_PARAMS or pname not in CHAIN_PARAMS[step]:
                raise ConfigError(f"unknown augmentation parameter {key!r}")
            chain_params[key] = value
            continue
        if key not in actions:
            raise ConfigError(f"unknown key {key!r} in [{args.command}]")
        try:
            defaults[key] = _convert(actions[key], value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    args.chain_params = chain_params
    return args


def execute(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        print("spoofkit: error: a subcommand is required", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.config:
            args = _apply_config(args, parser, subs, argv)
        else:
            args.chain_params = {}
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        subs[args.command].print_usage(sys.stderr)
        print(f"spoofkit {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"spoofkit {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"spoofkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    try:
        return execute(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
