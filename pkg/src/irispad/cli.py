"""``irispad`` command-line tool.

Exit status: 0 and 1 carry a decision (match / non-match, live / attack);
anything >= 2 is an error, reported as ``<stage>: <ErrorName>: detail`` on
standard error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import format_config, load_config
from .encoding import load_template, match_many, save_template
from .errors import IrisError
from .evalmetrics import (
    ScoreSet, format_roc_csv, pad_rates, pad_table, read_decision_csv,
    read_score_csv, recognition_table, roc,
)
from .imaging import read_pgm, write_mask, write_pgm
from .normalization import normalize, save_normalized
from .pad2d import (
    decide_features, extract_features, format_feature_row, read_feature_csv, save_ensemble,
    train_ensemble,
)
from .pad3d import ospad3d_decide
from .pipeline import (
    MANIFEST_HEADER, eval_pad, eval_recognition, format_manifest_row, pad_line, pad_mask,
    read_manifest, run_bench, run_full, run_pad, run_verify, segment_image, template_from_image,
)
from .segmentation import write_circles
from .synthgen import SynthSpec, capture_spec, render_eye, render_pair

EXIT_ERROR = 2


# ---------------------------------------------------------------------------
# synth


def synthesize(out: Path, identities: int, captures: int, lens: str | None = None,
               lens_captures: int = 1, pairs: bool = False, first_identity: int = 0,
               base: SynthSpec | None = None) -> Path:
    """Write a synthetic dataset and its manifest; returns the manifest path.

    Every identity gets ``captures`` clean captures. With ``lens`` it also
    gets ``lens_captures`` extra captures wearing that lens. With ``pairs``
    each capture is a left/right LED pair plus the iris mask; live pairs use
    a smooth dome surface, textured-lens pairs a bumpy one and opaque-lens
    pairs a flat one.
    """
    out.mkdir(parents=True, exist_ok=True)
    rows = [MANIFEST_HEADER]
    surfaces = {"none": "flat-dome", "textured": "bumpy", "opaque": "flat"}
    for ident in range(first_identity, first_identity + identities):
        plan = [(c, "none") for c in range(captures)]
        if lens:
            plan += [(captures + k, lens) for k in range(lens_captures)]
        for cap, kind in plan:
            spec = capture_spec(ident, cap, base, lens=kind, lens_seed=ident % 7,
                                surface=surfaces[kind])
            stem = f"id{ident:04d}_c{cap:02d}"
            if pairs:
                left, right, mask = render_pair(spec)
                write_pgm(left, out / f"{stem}_L.pgm")
                write_pgm(right, out / f"{stem}_R.pgm")
                write_mask(mask, out / f"{stem}_mask.pgm")
                name = f"{stem}_L.pgm"
            else:
                img, truth = render_eye(spec)
                write_pgm(img, out / f"{stem}.pgm")
                write_mask(truth.mask, out / f"{stem}_mask.pgm")
                name = f"{stem}.pgm"
            write_circles(spec.pupil, spec.iris, out / f"{stem}.circles")
            rows.append(format_manifest_row(name, ident, kind, spec.surface))
    manifest = out / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# handlers


def _cfg(args, **extra):
    return load_config(
        args.config,
        rows=args.rows, cols=args.cols, filter_bank=args.filter_bank, max_shift=args.max_shift,
        match_threshold=args.threshold, pad_scales=args.scales, pad_bank_dir=args.pad_bank_dir,
        roi=args.roi, tau3=args.tau3, theta=args.theta, model=args.model, workers=args.workers,
        **extra,
    )


def cmd_synth(args):
    manifest = synthesize(Path(args.out), args.identities, args.captures, args.lens,
                          args.lens_captures, args.pairs, args.first_identity)
    print(manifest)
    return 0


def cmd_config(args):
    sys.stdout.write(format_config(_cfg(args)))
    return 0


def cmd_segment(args):
    cfg = _cfg(args)
    img = read_pgm(args.image)
    seg = segment_image(img, cfg)
    p, i = seg.pupil, seg.iris
    print(f"{p.cx:.2f} {p.cy:.2f} {p.r:.2f} {i.cx:.2f} {i.cy:.2f} {i.r:.2f}")
    if args.out:
        write_circles(p, i, f"{args.out}.circles")
        write_mask(seg.mask, f"{args.out}_mask.pgm")
    return 0


def cmd_normalize(args):
    cfg = _cfg(args)
    img = read_pgm(args.image)
    seg = segment_image(img, cfg, args.mask, args.circles)
    norm = normalize(img, seg, cfg.rows, cfg.cols)
    for path in save_normalized(norm, args.out):
        print(path)
    return 0


def cmd_encode(args):
    cfg = _cfg(args)
    t = template_from_image(read_pgm(args.image), cfg, mask_path=args.mask, circles_path=args.circles)
    save_template(t, args.out)
    print(args.out)
    return 0


def cmd_match(args):
    cfg = _cfg(args)
    probe = load_template(args.probe)
    gallery = [load_template(g) for g in args.gallery]
    print("probe,gallery,score,shift")
    for path, r in zip(args.gallery, match_many(probe, gallery, cfg.max_shift)):
        print(f"{args.probe},{path},{r.score:.6f},{r.best_shift}")
    return 0


def cmd_verify(args):
    res = run_verify(args.probe, args.gallery, _cfg(args), args.mask, args.circles)
    print(res.line())
    return res.exit_code


def _pair_inputs(args, cfg):
    left = read_pgm(args.left)
    right = read_pgm(args.right)
    return left, right, pad_mask(left, cfg, args.mask)


def cmd_pad3d(args):
    cfg = _cfg(args)
    left, right, mask = _pair_inputs(args, cfg)
    out = ospad3d_decide(left, right, mask, cfg.geometry(), cfg.tau3)
    print(f"{out.score:.6f} {out.decision}")
    return int(out.is_attack)


def cmd_pad2d(args):
    cfg = _cfg(args)
    x = extract_features(read_pgm(args.image), cfg.pad_banks(), cfg.roi)
    out = decide_features(x, cfg.ensemble(), cfg.workers)
    print(f"{out.score:.6f} {out.decision} {out.details['evaluated']}/{out.details['members']}")
    return int(out.is_attack)


def cmd_pad(args):
    cfg = _cfg(args)
    left, right, mask = _pair_inputs(args, cfg)
    out = run_pad(left, right, mask, cfg, eager=args.eager)
    print(pad_line(out))
    return int(out.is_attack)


def cmd_full(args):
    res = run_full(args.left, args.right, args.gallery, _cfg(args), args.mask, args.circles,
                   force_match=args.force_match, eager=args.eager)
    print(res.line())
    return res.exit_code


def _manifest_features(manifest, cfg):
    entries = read_manifest(manifest)
    banks = cfg.pad_banks()
    X, y = [], []
    for e in entries:
        X.append(extract_features(read_pgm(e.path), banks, cfg.roi))
        y.append(int(e.is_attack))
    return np.array(X), np.array(y)


def cmd_train_pad2d(args):
    cfg = _cfg(args)
    features = args.features or args.features_pos
    if bool(features) == bool(args.manifest):
        print("train-pad2d: give exactly one of a features CSV or --manifest", file=sys.stderr)
        return EXIT_ERROR
    if features:
        X, y = read_feature_csv(features)
    else:
        X, y = _manifest_features(args.manifest, cfg)
    if args.dump_features:
        with open(args.dump_features, "w") as fh:
            for label, x in zip(y, X):
                fh.write(format_feature_row(label, x) + "\n")
    ens = train_ensemble(X, y, seed=args.seed)
    save_ensemble(ens, args.out)
    print(args.out)
    return 0


def _write(path, text):
    if path:
        Path(path).write_text(text)


def cmd_eval(args):
    if args.scores:
        if not args.kind:
            print("eval: --scores requires --kind recognition|pad", file=sys.stderr)
            return EXIT_ERROR
        raw = read_score_csv(args.scores, args.kind)
        if args.kind == "recognition":
            s = ScoreSet(raw["genuine"], raw["imposter"])
        else:
            # bona fide plays the role of genuine: both sit at the low end
            s = ScoreSet(raw["bonafide"], raw["attack"])
        if len(s.genuine) and len(s.imposter) and s.genuine.mean() > s.imposter.mean():
            print(f"warning: {args.kind} scores look inverted (low-end class has the higher mean)",
                  file=sys.stderr)
        sys.stdout.write(recognition_table(s, args.target_fmr))
        _write(args.roc, format_roc_csv(roc(s)))
        return 0
    if args.decisions:
        raw = read_decision_csv(args.decisions)
        rates = pad_rates(raw["bonafide"], raw["attack"])
        sys.stdout.write(pad_table([(args.name, rates)]))
        return 0

    cfg = _cfg(args)
    entries = read_manifest(args.manifest)
    if all(e.is_pair for e in entries):
        text, decisions = eval_pad(entries, cfg)
        _write(args.out, text)
        sys.stdout.write(pad_table([(args.name, pad_rates(decisions["bonafide"], decisions["attack"]))]))
        return 0
    text, scores = eval_recognition(entries, cfg, use_truth=args.truth)
    _write(args.out, text)
    s = ScoreSet(scores["genuine"], scores["imposter"])
    sys.stdout.write(recognition_table(s, args.target_fmr))
    if scores["contact"]:
        c = ScoreSet(scores["genuine"], scores["contact"])
        sys.stdout.write("genuine vs contact\n" + recognition_table(c, args.target_fmr))
    _write(args.roc, format_roc_csv(roc(s)))
    return 0


def cmd_bench(args):
    cfg = _cfg(args)
    report = run_bench(read_manifest(args.manifest), cfg, args.repetitions, args.include_io)
    sys.stdout.write(report.format())
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p):
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="key = value configuration file")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--filter-bank", help="recognition BSIF filter file")
    g.add_argument("--max-shift", type=int)
    g.add_argument("--threshold", type=float, help="match threshold on the distance score")
    g.add_argument("--scales", help="PAD scales, e.g. 8x5,8x9,8x13,8x17")
    g.add_argument("--pad-bank-dir")
    g.add_argument("--roi", type=int)
    g.add_argument("--tau3", type=float)
    g.add_argument("--theta", type=float, help="LED half-angle in degrees")
    g.add_argument("--model", help="trained 2D PAD ensemble")
    g.add_argument("--workers", type=int)


def _geometry_inputs(p):
    p.add_argument("--mask", help="binary mask PGM (nonzero >= 128 is valid)")
    p.add_argument("--circles", help="'px py pr ix iy ir' sidecar; skips segmentation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irispad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--captures", type=int, required=True)
    p.add_argument("--lens", choices=("textured", "opaque"))
    p.add_argument("--lens-captures", type=int, default=1)
    p.add_argument("--pairs", action="store_true")
    p.add_argument("--first-identity", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("config", help="print the effective configuration")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("segment", help="locate pupil and iris circles")
    p.add_argument("image")
    p.add_argument("--out", help="basename for .circles and _mask.pgm outputs")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("normalize", help="write the rubber-sheet raster and mask")
    p.add_argument("image")
    p.add_argument("--out", required=True, help="output basename")
    _geometry_inputs(p)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("encode", help="write an iris template")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    _geometry_inputs(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("match", help="compare a probe template with gallery templates")
    p.add_argument("probe")
    p.add_argument("gallery", nargs="+")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("verify", help="1:1 verification; exit 0 match, 1 non-match")
    p.add_argument("probe", help="image or template")
    p.add_argument("gallery", help="template")
    _geometry_inputs(p)
    p.set_defaults(func=cmd_verify)

    for name, fn, text in (("pad3d", cmd_pad3d, "photometric PAD; exit 0 live, 1 attack"),
                           ("pad", cmd_pad, "fused PAD cascade; exit 0 live, 1 attack")):
        p = sub.add_parser(name, help=text)
        p.add_argument("left")
        p.add_argument("right")
        p.add_argument("--mask")
        if name == "pad":
            p.add_argument("--eager", action="store_true", help="start the 2D stage concurrently")
        p.set_defaults(func=fn)

    p = sub.add_parser("pad2d", help="texture PAD; exit 0 live, 1 attack")
    p.add_argument("image")
    p.set_defaults(func=cmd_pad2d)

    p = sub.add_parser("full", help="PAD then recognition; exit 0 only for live + match")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("gallery")
    _geometry_inputs(p)
    p.add_argument("--force-match", action="store_true", help="match even after an attack verdict")
    p.add_argument("--eager", action="store_true")
    p.set_defaults(func=cmd_full)

    p = sub.add_parser("train-pad2d", help="train the texture PAD ensemble")
    p.add_argument("features_pos", nargs="?", metavar="features.csv", help="CSV of label,f1,...,fD")
    p.add_argument("--features", help="same as the positional argument")
    p.add_argument("--manifest", help="synth manifest; lensed entries are attacks")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-features")
    p.set_defaults(func=cmd_train_pad2d)

    p = sub.add_parser("eval", help="metrics from scores, decisions or a manifest")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores", help="label,score CSV")
    src.add_argument("--decisions", help="label,decision CSV (bonafide|attack, live|attack)")
    src.add_argument("--manifest", help="run the pipeline over a synth manifest")
    p.add_argument("--kind", choices=("recognition", "pad"), help="score orientation, required with --scores")
    p.add_argument("--target-fmr", type=float, default=0.01)
    p.add_argument("--roc", help="write the ROC as CSV")
    p.add_argument("--out", help="per-comparison CSV (manifest mode)")
    p.add_argument("--truth", action="store_true", help="use ground-truth circles instead of segmenting")
    p.add_argument("--name", default="OSPAD-fusion")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-stage timing over a pair manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--include-io", action="store_true")
    p.set_defaults(func=cmd_bench)

    for name, sp in sub.choices.items():
        if name != "synth":
            _common(sp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IrisError as exc:
        detail = f": {exc}" if str(exc) else ""
        print(f"{exc.stage}: {type(exc).__name__}{detail}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"io: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
