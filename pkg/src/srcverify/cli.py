"""Command-line interface: extract, dict, verify, eval, sweep, synth.

Every command validates its inputs and parameters before anything is
written. Outputs are plain CSV/JSON and depend only on the inputs, the
flags and the seeds; wall-clock timings are added only with --benchmark.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .dictionary import (Dictionary, DictionaryError, blocks_from_features, build_dictionary,
                         sample_classes, save_dictionary, subset)
from .features import (DEFAULT_DIM, DEFAULT_HEIGHT, DEFAULT_WIDTH, FeatureFileError,
                       FeatureVector, ImageFormatError, extract_features, format_float,
                       read_feature_csv, read_image, write_feature_csv)
from .fusion import FusionError, MultimodalQuery, verify, verify_multimodal
from .scoring import Metric, ScoringError, cosine_best_match, decide, write_score_dump
from .solver import DEFAULT_LAMBDA, SolverConfig, SolverError
from .synth import (Dataset, PairedDataset, SynthError, SynthParams, combine_modalities,
                    load_paired, md_shape, save_paired)


class CliError(Exception):
    """Reported as a one-line message with exit status 1."""


# ---------------------------------------------------------------------------
# config file: "key = value" lines, '#' comments; flags given on the command
# line win over file values

def read_config(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]):
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        if key == "config":
            continue
        act = actions.get(key)
        if act is None:
            raise CliError(f"unknown config key {key!r} for this command")
        if isinstance(act, argparse._StoreTrueAction):
            if raw.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise CliError(f"config key {key!r} expects true/false")
            defaults[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(act, argparse._AppendAction):
            conv = act.type or str
            defaults[key] = [conv(v.strip()) for v in raw.split(",") if v.strip()]
        else:
            conv = act.type or str
            try:
                defaults[key] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise CliError(f"config key {key!r}: {exc}") from None
    parser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# helpers

def _solver_cfg(args) -> SolverConfig:
    try:
        return SolverConfig(lam=args.lam, tol=args.tol, max_iter=args.max_iter)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise CliError(f"--out {out} exists and is not a directory")
    return out


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_features(path) -> list[FeatureVector]:
    try:
        return read_feature_csv(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None


def _dataset(gallery_csv, probe_csv) -> Dataset:
    gallery = blocks_from_features(_read_features(gallery_csv))
    probes = _read_features(probe_csv)
    if any(p.subject_id is None for p in probes):
        raise CliError(f"{probe_csv}: every probe needs a subject_id")
    return Dataset(gallery, probes)


def _check_probe_dims(d: Dictionary, probes, label):
    bad = [p.source_id for p in probes if p.dim != d.dim]
    if bad:
        raise CliError(f"{label}: probe dimension differs from gallery ({bad[0]!r})")


# ---------------------------------------------------------------------------
# extract

def _image_jobs(inputs) -> list[tuple[Path, str, str]]:
    """(path, subject, sample) for every PGM found.

    Files directly inside a directory are named <subject>_<sample>.pgm;
    files inside per-subject subdirectories take the directory name.
    """
    jobs = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            for f in sorted(p.rglob("*.pgm")):
                rel = f.relative_to(p)
                if len(rel.parts) > 1:
                    jobs.append((f, rel.parts[0], f.stem))
                else:
                    subj, _, sample = f.stem.partition("_")
                    jobs.append((f, subj, sample or f.stem))
        elif p.is_file():
            subj, _, sample = p.stem.partition("_")
            jobs.append((p, subj, sample or p.stem))
        else:
            raise CliError(f"no such file or directory: {p}")
    if not jobs:
        raise CliError("no .pgm images found")
    return jobs


def cmd_extract(args) -> int:
    if args.width < 1 or args.height < 1:
        raise CliError("target size must be positive")
    if not 1 <= args.dim <= args.width * args.height:
        raise CliError(f"--dim must lie in 1..{args.width * args.height}")
    out = Path(args.out)
    jobs = _image_jobs(args.images)
    features, errors = [], []
    for path, subj, sample in jobs:
        try:
            img = read_image(path)
        except (OSError, ImageFormatError, ValueError) as exc:
            errors.append(f"{path}: {exc}")
            continue
        features.append(extract_features(img, args.dim, args.width, args.height,
                                         modality=args.modality,
                                         source_id=f"{subj}_{sample}", subject_id=subj))
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        raise CliError(f"{len(errors)} of {len(jobs)} images could not be read")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(out, features)
    _write_json(out.with_suffix(".json"), {
        "features": out.name, "count": len(features), "dimension": args.dim,
        "modality": args.modality, "width": args.width, "height": args.height,
        "subjects": sorted({f.subject_id for f in features}),
    })
    print(f"extracted {len(features)} feature vectors of dimension {args.dim} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# dict

def cmd_dict(args) -> int:
    out = _out_dir(args)
    try:
        d = build_dictionary(blocks_from_features(_read_features(args.features)))
    except (DictionaryError, ValueError) as exc:
        raise CliError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    save_dictionary(d, out / "dictionary.csv", out / "dictionary.json")
    print(f"dictionary: {d.n_classes} classes, {d.n_columns} columns, dimension {d.dim}")
    return 0


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    metric = Metric(args.metric)
    if args.threshold is None:
        raise CliError("--threshold is required")
    cfg = _solver_cfg(args)
    if len(args.gallery) != len(args.probe) or len(args.gallery) not in (1, 2):
        raise CliError("give --gallery/--probe once (unimodal) or twice (face, ear)")
    out = _out_dir(args)
    dicts = [build_dictionary(blocks_from_features(_read_features(g))) for g in args.gallery]
    probes = [_read_features(p) for p in args.probe]
    for d, ps, label in zip(dicts, probes, args.probe):
        _check_probe_dims(d, ps, label)
    if len(dicts) == 2 and len(probes[0]) != len(probes[1]):
        raise CliError("face and ear probe files must have the same number of rows")

    rows = []
    header = ["probe_id", "claimed_class", "metric", "value", "threshold", "decision"]
    for i in range(len(probes[0])):
        first = probes[0][i]
        claimed = args.claimed or first.subject_id
        if claimed is None:
            raise CliError(f"probe {first.source_id!r} has no subject; pass --claimed")
        if len(dicts) == 1:
            if metric is Metric.COSINE:
                if claimed not in dicts[0]:
                    raise CliError(f"unknown claimed class {claimed!r}")
                dec = decide(cosine_best_match(first, dicts[0].block(claimed)),
                             args.threshold)
            else:
                dec = verify(dicts[0], first, claimed, metric, args.threshold, cfg)
            pid = first.source_id
        else:
            if metric is Metric.COSINE:
                raise CliError("multimodal verification supports sce and scr")
            q = MultimodalQuery(first, probes[1][i], claimed,
                                f"{first.source_id}+{probes[1][i].source_id}")
            dec, _ = verify_multimodal(dicts[0], dicts[1], q, metric, args.threshold, cfg)
            pid = q.probe_id
        rows.append([pid, claimed, metric.value, format_float(dec.score.value),
                     format_float(args.threshold), dec.outcome])
        print(f"{pid}\t{claimed}\t{dec.score.value:.6f}\t{dec.outcome}")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "decisions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return 0


# ---------------------------------------------------------------------------
# eval

def _load_eval_data(args) -> tuple[str, object]:
    if args.data:
        if args.gallery or args.probe:
            raise CliError("use either --data or --gallery/--probe")
        return "paired", load_paired(args.data)
    if not args.gallery or len(args.gallery) != len(args.probe):
        raise CliError("give --data DIR, or --gallery/--probe once or twice")
    sets = [_dataset(g, p) for g, p in zip(args.gallery, args.probe)]
    if len(sets) == 1:
        return "single", sets[0]
    if len(sets) == 2:
        return "paired", combine_modalities(sets[0], sets[1])
    raise CliError("at most two modalities are supported")


def _bench_pipeline(d: Dictionary, metric, cfg):
    def run(p):
        if metric is Metric.COSINE:
            return cosine_best_match(p, d.block(p.subject_id))
        return verify(d, p, p.subject_id, metric, 0.0, cfg)
    return run


def _bench_pipeline_mm(fd, ed, metric, cfg):
    def run(q):
        return verify_multimodal(fd, ed, q, metric, 0.0, cfg)
    return run


def cmd_eval(args) -> int:
    metric = Metric(args.metric)
    cfg = _solver_cfg(args)
    out = _out_dir(args)
    kind, data = _load_eval_data(args)
    bench_n = args.bench_probes

    if kind == "single":
        d = build_dictionary(data.gallery)
        _check_probe_dims(d, data.probes, "probes")
        reps = {d.modality: ev.evaluate_unimodal(d, data.probes, metric, cfg,
                                                 keep_records=args.dump)}
        if args.benchmark:
            reps[d.modality].runtime_stats = ev.benchmark_verification(
                _bench_pipeline(d, metric, cfg), data.probes[:bench_n])
    else:
        fd, ed = data.dictionaries()
        _check_probe_dims(fd, data.face_probes, "face probes")
        _check_probe_dims(ed, data.ear_probes, "ear probes")
        if metric is Metric.COSINE:
            reps = _cosine_multimodal(fd, ed, data)
        else:
            reps = ev.evaluate_multimodal(fd, ed, data.probes, metric, cfg,
                                          keep_records=args.dump)
        if args.benchmark and metric is not Metric.COSINE:
            reps["fused"].runtime_stats = ev.benchmark_verification(
                _bench_pipeline_mm(fd, ed, metric, cfg), data.probes[:bench_n])

    out.mkdir(parents=True, exist_ok=True)
    summary = {"metric": metric.value, "lambda": cfg.lam, "tol": cfg.tol,
               "max_iter": cfg.max_iter, "reports": {}}
    for name, rep in reps.items():
        prefix = f"{name}_{metric.value}"
        ev.write_report(rep, out, prefix, args.bins)
        if rep.records is not None:
            write_score_dump(out / f"{prefix}_scores.csv", rep.records)
        summary["reports"][name] = {"eer": rep.eer, "rank_one": rep.rank_one,
                                    "report": f"{prefix}_report.json"}
        print(f"{name:6s} {metric.value}: EER {100 * rep.eer:.3f}%  "
              f"rank-one {100 * rep.rank_one:.2f}%  "
              f"({rep.scores.genuine.size} genuine / {rep.scores.imposter.size} imposter)")
    _write_json(out / "summary.json", summary)
    return 0


def _cosine_multimodal(fd, ed, data: PairedDataset) -> dict:
    """Best-match cosine per modality, summed like the sparse scores."""
    labels = [q.claimed for q in data.probes]
    true_idx = np.array([fd.class_index(c) for c in labels])
    mm = ev.multimodal_matrices(fd, ed, data.probes, Metric.COSINE)
    fl = np.zeros(mm.face.shape[0], dtype=int)
    fl[mm.face_idx] = true_idx
    el = np.zeros(mm.ear.shape[0], dtype=int)
    el[mm.ear_idx] = true_idx
    meta = {"metric": "cosine", "classes": fd.n_classes}
    return {
        "face": ev.build_report(mm.face, fl, Metric.COSINE, {**meta, "modality": "face"}),
        "ear": ev.build_report(mm.ear, el, Metric.COSINE, {**meta, "modality": "ear"}),
        "fused": ev.build_report(mm.fused, true_idx, Metric.COSINE,
                                 {**meta, "modality": "fused"}),
    }


# ---------------------------------------------------------------------------
# sweep

def cmd_sweep(args) -> int:
    metric = Metric(args.metric)
    if metric is Metric.COSINE:
        raise CliError("sweep needs a sparse metric (sce or scr)")
    cfg = _solver_cfg(args)
    if args.trials < 1:
        raise CliError("--trials must be >= 1")
    out = _out_dir(args)
    kind, data = _load_eval_data(args)
    if kind == "single":
        dicts = (build_dictionary(data.gallery),)
        c = dicts[0].n_classes
    else:
        dicts = data.dictionaries()
        c = dicts[0].n_classes
    scales = args.scale or [c]
    bad = [k for k in scales if not 1 <= k <= c]
    if bad:
        raise CliError(f"scales {bad} outside 1..{c}")
    if kind == "paired" and args.modality != "fused":
        data = Dataset(data.face_gallery if args.modality == "face" else data.ear_gallery,
                       data.face_probes if args.modality == "face" else data.ear_probes)
        dicts = (dicts[0] if args.modality == "face" else dicts[1],)
        kind = "single"

    if kind == "single":
        def score_fn(k, r):
            return ev.small_dictionary_scores(dicts[0], data.probes, k, r, args.seed, metric,
                                              cfg)
    else:
        def score_fn(k, r):
            return ev.small_dictionary_scores_multimodal(dicts[0], dicts[1], data.probes, k,
                                                         r, args.seed, metric, cfg)

    summaries = ev.sweep_scales(scales, args.trials, score_fn, full=c)
    if args.benchmark:
        probes = data.probes[:args.bench_probes]
        for s in summaries:
            s.runtime = ev.benchmark_verification(
                _small_pipeline(dicts, s.scale, args.seed, metric, cfg, kind), probes)

    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "sweep.json", {
        "metric": metric.value, "trials": args.trials, "seed": args.seed,
        "classes": c, "modality": args.modality if kind == "single" else "fused",
        "spread": "max absolute deviation of trial EERs from their mean",
        "scales": [s.to_dict() for s in summaries],
    })
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scale", "trial", "eer"])
        for s in summaries:
            for r, e in enumerate(s.eers):
                w.writerow([s.scale, r, format_float(e)])
    for s in summaries:
        line = f"scale {s.scale:4d}: EER% {s.formatted()}"
        if s.runtime:
            line += f"  runtime {s.runtime.mean:.4f}s/probe"
        print(line)
    return 0


def _small_pipeline(dicts, k, seed, metric, cfg, kind):
    """Verification on the trial-0 sampled dictionary of the claimed class."""
    base = dicts[0]

    def pick(claimed):
        cls = base.class_index(claimed)
        return sample_classes(base.class_ids, claimed, k, ev.trial_rng(seed, 0, cls))

    if kind == "single":
        def run(p):
            return verify(subset(base, pick(p.subject_id)), p, p.subject_id, metric, 0.0, cfg)
    else:
        def run(q):
            ids = pick(q.claimed)
            return verify_multimodal(subset(dicts[0], ids), subset(dicts[1], ids), q, metric,
                                     0.0, cfg)
    return run


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    try:
        for p in (args.probes, args.ear_probes):
            SynthParams(c=args.classes, l=args.train, p=p, dim=args.dim,
                        within_spread=args.within_spread,
                        between_spread=args.between_spread, seed=args.seed)
    except SynthError as exc:
        raise CliError(str(exc)) from None
    out = _out_dir(args)
    paired = md_shape(args.classes, args.probes, args.ear_probes, l=args.train, dim=args.dim,
                      seed=args.seed, within_spread=args.within_spread,
                      between_spread=args.between_spread)
    params = {"classes": args.classes, "train": args.train, "face_probes": args.probes,
              "ear_probes": args.ear_probes, "dim": args.dim,
              "within_spread": args.within_spread, "between_spread": args.between_spread,
              "seed": args.seed}
    save_paired(paired, out, params)
    print(f"synthetic dataset: {args.classes} subjects, gallery {args.train}/subject, "
          f"{len(paired.probes)} multimodal probes -> {out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def _common(p: argparse.ArgumentParser, solver_flags=True, metric=True):
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=42, help="RNG seed (default: 42)")
    if solver_flags:
        p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                       help=f"L1 weight (default: {DEFAULT_LAMBDA})")
        p.add_argument("--tol", type=float, default=1e-6, help="KKT tolerance")
        p.add_argument("--max-iter", type=int, default=5000, help="solver iteration cap")
    if metric:
        p.add_argument("--metric", choices=[m.value for m in Metric], default="sce")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="srcverify", description="Sparse-representation biometric verification.")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("extract", help="PGM images -> DCT feature CSV")
    p.add_argument("images", nargs="+", help="image files or directories")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="feature CSV to write")
    p.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    p.add_argument("--height", type=int, default=DEFAULT_HEIGHT)
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--modality", default="face")
    p.set_defaults(func=cmd_extract)
    subs["extract"] = p

    p = sub.add_parser("dict", help="feature CSV -> normalized dictionary + manifest")
    p.add_argument("features")
    _common(p, solver_flags=False, metric=False)
    p.set_defaults(func=cmd_dict)
    subs["dict"] = p

    p = sub.add_parser("verify", help="accept/reject decisions for probes")
    _common(p)
    p.add_argument("--gallery", action="append", default=[],
                   help="gallery feature CSV (twice for face then ear)")
    p.add_argument("--probe", action="append", default=[],
                   help="probe feature CSV (twice for face then ear)")
    p.add_argument("--claimed", help="claimed class for every probe "
                                     "(default: each probe's own subject)")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_verify)
    subs["verify"] = p

    for name, func, hlp in (("eval", cmd_eval, "EER/ROC/CMC evaluation"),
                            ("sweep", cmd_sweep, "small random dictionary sweep")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--data", help="directory written by the synth command")
        p.add_argument("--gallery", action="append", default=[],
                       help="gallery feature CSV (twice for face then ear)")
        p.add_argument("--probe", action="append", default=[],
                       help="probe feature CSV (twice for face then ear)")
        p.add_argument("--benchmark", action="store_true",
                       help="also time verifications (adds non-deterministic fields)")
        p.add_argument("--bench-probes", type=int, default=50,
                       help="probes timed per benchmark (default: 50)")
        p.set_defaults(func=func)
        subs[name] = p
    subs["eval"].add_argument("--bins", type=int, default=50, help="histogram bins")
    subs["eval"].add_argument("--dump", action="store_true", help="write per-score CSV")
    subs["sweep"].add_argument("--scale", type=int, action="append",
                               help="dictionary scale k (repeatable; default: all classes)")
    subs["sweep"].add_argument("--trials", type=int, default=10)
    subs["sweep"].add_argument("--modality", choices=["fused", "face", "ear"],
                               default="fused", help="for paired data (default: fused)")

    p = sub.add_parser("synth", help="generate a synthetic face+ear dataset")
    _common(p, solver_flags=False, metric=False)
    d = SynthParams()
    p.add_argument("--classes", type=int, default=d.c)
    p.add_argument("--train", type=int, default=d.l, help="gallery samples per subject")
    p.add_argument("--probes", type=int, default=d.p, help="face probes per subject")
    p.add_argument("--ear-probes", type=int, default=11, help="ear probes per subject")
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--within-spread", type=float, default=d.within_spread)
    p.add_argument("--between-spread", type=float, default=d.between_spread)
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p
    return parser, subs


def _config_path(argv) -> str | None:
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        cfg_path = _config_path(argv)
        if cfg_path is not None:
            cmd = next((a for a in argv if a in subs), None)
            if cmd is None:
                parser.parse_args(argv)  # reports the usage error
            _apply_config(subs[cmd], read_config(cfg_path))
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, DictionaryError, FeatureFileError, FusionError, ScoringError,
            SolverError, SynthError, ev.EvaluationError, ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
