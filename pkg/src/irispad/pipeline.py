"""End-to-end stage composition used by the command-line tool.

Recognition runs segmentation (or ingests an external mask), normalization,
encoding and matching. The full flow gates recognition on the fused PAD
verdict. Batch helpers keep manifest order no matter how many worker
processes are used.
"""
from __future__ import annotations

import csv
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import PipelineConfig
from .encoding import IrisTemplate, MatchScore, encode, load_template, match, match_many
from .errors import EmptyManifest
from .fusion import cascade
from .imaging import read_mask, read_pgm
from .normalization import normalize
from .pad2d import decide_features, extract_features
from .pad3d import PadOutcome, estimate_normals, ospad3d_decide, ospad3d_score
from .segmentation import SegmentationResult, annulus_mask, ingest_mask, read_circles, segment_circular


def segment_image(img, cfg: PipelineConfig, mask_path=None, circles_path=None) -> SegmentationResult:
    """Segment ``img``, or ingest an external mask when circles are supplied."""
    if circles_path is not None:
        pupil, iris = read_circles(circles_path)
        if mask_path is None:
            return SegmentationResult(pupil, iris, annulus_mask(img.shape, pupil, iris) & (img <= 250))
        return ingest_mask(img, mask_path, pupil, iris)
    return segment_circular(img, cfg.segment_config())


def template_from_image(img, cfg: PipelineConfig, bank=None, mask_path=None, circles_path=None) -> IrisTemplate:
    seg = segment_image(img, cfg, mask_path, circles_path)
    norm = normalize(img, seg, cfg.rows, cfg.cols)
    return encode(norm, bank if bank is not None else cfg.recognition_bank())


def is_template_file(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == b"ITPL"
    except OSError:
        return False


def load_probe(path, cfg: PipelineConfig, mask_path=None, circles_path=None) -> IrisTemplate:
    if is_template_file(path):
        return load_template(path)
    return template_from_image(read_pgm(path), cfg, mask_path=mask_path, circles_path=circles_path)


@dataclass
class VerifyResult:
    score: MatchScore
    is_match: bool

    def line(self) -> str:
        verdict = "match" if self.is_match else "non-match"
        return f"{self.score.score:.6f} {self.score.best_shift} {verdict}"

    @property
    def exit_code(self) -> int:
        return 0 if self.is_match else 1


def run_verify(probe, gallery, cfg: PipelineConfig, mask_path=None, circles_path=None) -> VerifyResult:
    """``probe`` is an image or template path, ``gallery`` a template path."""
    gal = load_template(gallery) if not isinstance(gallery, IrisTemplate) else gallery
    probe_t = probe if isinstance(probe, IrisTemplate) else load_probe(probe, cfg, mask_path, circles_path)
    score = match(probe_t, gal, cfg.max_shift)
    return VerifyResult(score, score.score <= cfg.match_threshold)


# ---------------------------------------------------------------------------
# PAD and the full flow


def pad_mask(img_left, cfg: PipelineConfig, mask_path=None):
    """PAD region: an explicit mask file, else the segmented iris annulus."""
    if mask_path is not None:
        return read_mask(mask_path)
    seg = segment_circular(img_left, cfg.segment_config())
    return annulus_mask(img_left.shape, seg.pupil, seg.iris)


def run_pad(img_left, img_right, mask, cfg: PipelineConfig, ensemble=None, banks=None,
            eager: bool = False) -> PadOutcome:
    ensemble = ensemble if ensemble is not None else cfg.ensemble()
    banks = banks if banks is not None else cfg.pad_banks()

    def run2d():
        x = extract_features(img_left, banks, cfg.roi)
        return decide_features(x, ensemble, cfg.workers)

    return cascade(lambda: ospad3d_decide(img_left, img_right, mask, cfg.geometry(), cfg.tau3),
                   run2d, eager=eager)


def pad_line(out: PadOutcome) -> str:
    d = out.details
    s3 = "nan" if d.get("score3d") is None else f"{d['score3d']:.6f}"
    d3 = d.get("decision3d") or "error"
    d2 = d.get("decision2d") or "skipped"
    return f"{s3} {d3} {d2} {out.decision}"


@dataclass
class FullResult:
    pad: PadOutcome
    score: MatchScore | None
    is_match: bool | None

    def line(self) -> str:
        if self.score is None:
            rec = "nan nan skipped"
        else:
            rec = f"{self.score.score:.6f} {self.score.best_shift} {'match' if self.is_match else 'non-match'}"
        return f"{pad_line(self.pad)} {rec}"

    @property
    def exit_code(self) -> int:
        return 0 if (not self.pad.is_attack and self.is_match) else 1


def run_full(left_path, right_path, gallery, cfg: PipelineConfig, mask_path=None,
             circles_path=None, force_match: bool = False, eager: bool = False) -> FullResult:
    """PAD cascade first; recognition on the left image only if live (or forced)."""
    left = read_pgm(left_path)
    right = read_pgm(right_path)
    seg = segment_image(left, cfg, mask_path, circles_path)
    pmask = read_mask(mask_path) if mask_path is not None else annulus_mask(left.shape, seg.pupil, seg.iris)
    out = run_pad(left, right, pmask, cfg, eager=eager)
    if out.is_attack and not force_match:
        return FullResult(out, None, None)
    gal = load_template(gallery) if not isinstance(gallery, IrisTemplate) else gallery
    probe = encode(normalize(left, seg, cfg.rows, cfg.cols), cfg.recognition_bank())
    score = match(probe, gal, cfg.max_shift)
    return FullResult(out, score, score.score <= cfg.match_threshold)


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    identity: int
    lens: str
    surface: str

    @property
    def is_pair(self) -> bool:
        return self.path.name.endswith("_L.pgm")

    def sibling(self, suffix: str) -> Path:
        """``x_L.pgm`` -> ``x_R.pgm`` etc.; ``suffix`` replaces ``_L.pgm``."""
        return self.path.with_name(self.path.name[: -len("_L.pgm")] + suffix)

    @property
    def circles(self) -> Path:
        stem = self.path.name[: -len("_L.pgm")] if self.is_pair else self.path.stem
        return self.path.with_name(stem + ".circles")

    @property
    def is_attack(self) -> bool:
        return self.lens != "none"


MANIFEST_HEADER = "path,identity,lens,surface"


def read_manifest(path) -> list:
    base = Path(path).parent
    entries = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise EmptyManifest(f"cannot read manifest {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0].strip() == "path"):
                continue
            if len(row) != 4:
                raise EmptyManifest(f"{path}:{lineno}: expected '{MANIFEST_HEADER}'")
            p = Path(row[0].strip())
            entries.append(ManifestEntry(p if p.is_absolute() else base / p,
                                         int(row[1]), row[2].strip(), row[3].strip()))
    if not entries:
        raise EmptyManifest(f"manifest {path} lists no samples")
    return entries


def format_manifest_row(rel_path: str, identity: int, lens: str, surface: str) -> str:
    return f"{rel_path},{identity},{lens},{surface}"


def _ordered_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _encode_entry(args):
    entry, cfg, use_truth = args
    img = read_pgm(entry.path)
    circles = entry.circles if use_truth else None
    return template_from_image(img, cfg, circles_path=circles)


def _pair_label(a: ManifestEntry, b: ManifestEntry) -> str:
    if a.identity != b.identity:
        return "imposter"
    if a.is_attack or b.is_attack:
        return "contact"
    return "genuine"


def eval_recognition(entries, cfg: PipelineConfig, use_truth: bool = False):
    """All-pairs match over the manifest; returns ``(csv_text, {label: scores})``.

    Same-identity pairs involving a lensed capture are labeled ``contact``.
    Rows follow manifest order (i < j) regardless of worker count.
    """
    if any(e.is_pair for e in entries):
        raise EmptyManifest("recognition evaluation needs single-image entries")
    templates = _ordered_map(_encode_entry, [(e, cfg, use_truth) for e in entries], cfg.workers)
    lines = ["probe,gallery,label,score,shift"]
    scores = {"genuine": [], "imposter": [], "contact": []}
    for i, probe in enumerate(templates[:-1]):
        results = match_many(probe, templates[i + 1:], cfg.max_shift)
        for j, r in enumerate(results, start=i + 1):
            label = _pair_label(entries[i], entries[j])
            scores[label].append(r.score)
            lines.append(f"{entries[i].path.name},{entries[j].path.name},{label},{r.score!r},{r.best_shift}")
    return "\n".join(lines) + "\n", scores


def _pad_entry(args):
    entry, cfg, ensemble = args
    left = read_pgm(entry.path)
    right = read_pgm(entry.sibling("_R.pgm"))
    mask = read_mask(entry.sibling("_mask.pgm"))
    return run_pad(left, right, mask, cfg.with_overrides(workers=1), ensemble=ensemble)


def eval_pad(entries, cfg: PipelineConfig):
    """Fused PAD over a pair manifest; returns ``(csv_text, decisions by class)``."""
    if not all(e.is_pair for e in entries):
        raise EmptyManifest("PAD evaluation needs pair entries (*_L.pgm)")
    ensemble = cfg.ensemble()
    outcomes = _ordered_map(_pad_entry, [(e, cfg, ensemble) for e in entries], cfg.workers)
    lines = ["path,label,score3d,decision3d,decision2d,decision"]
    decisions = {"bonafide": [], "attack": []}
    for e, out in zip(entries, outcomes):
        label = "attack" if e.is_attack else "bonafide"
        decisions[label].append(out.decision)
        lines.append(f"{e.path.name},{label}," + ",".join(pad_line(out).split()))
    return "\n".join(lines) + "\n", decisions


# ---------------------------------------------------------------------------
# timing harness

BENCH_STAGES = ("Segmentation", "OSPAD-3D", "OSPAD-2D", "Iris Recognition")


@dataclass
class TimingReport:
    samples: dict = field(default_factory=lambda: {s: [] for s in BENCH_STAGES})

    @property
    def count(self) -> int:
        return len(self.samples[BENCH_STAGES[0]])

    def mean(self, stage: str) -> float:
        return statistics.fmean(self.samples[stage])

    def std(self, stage: str) -> float:
        # population std, so a single sample reports 0
        return statistics.pstdev(self.samples[stage])

    def format(self) -> str:
        rows = [("Component", "Time (s)")]
        for s in BENCH_STAGES:
            rows.append((s, f"{self.mean(s):.3f} (±{self.std(s):.3f})"))
        width = max(len(r[0]) for r in rows)
        lines = [f"{a.ljust(width)}  {b}" for a, b in rows]
        lines.append(f"samples: {self.count}")
        return "\n".join(lines) + "\n"


def _timed(fn):
    t0 = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - t0


def run_bench(entries, cfg: PipelineConfig, repetitions: int = 1, include_io: bool = False) -> TimingReport:
    """Per-pair wall-clock time of each stage over a pair manifest.

    Recognition covers normalization, encoding and one match against the
    first pair's template. Image reads count only with ``include_io``.
    """
    if not entries:
        raise EmptyManifest("bench manifest lists no samples")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    bank = cfg.recognition_bank()
    banks = cfg.pad_banks()
    ensemble = cfg.ensemble()
    geom = cfg.geometry()
    gallery = None
    report = TimingReport()

    for _ in range(repetitions):
        for e in entries:
            left_path = e.sibling("_L.pgm") if e.is_pair else e.path
            right_path = e.sibling("_R.pgm") if e.is_pair else e.path

            def read_pair():
                return read_pgm(left_path), read_pgm(right_path)

            (left, right), io = _timed(read_pair)
            io = io if include_io else 0.0

            seg, t = _timed(lambda: segment_circular(left, cfg.segment_config()))
            report.samples["Segmentation"].append(t + io / 2)

            mask = annulus_mask(left.shape, seg.pupil, seg.iris)
            _, t = _timed(lambda: ospad3d_score(estimate_normals(left, right, mask, geom)))
            report.samples["OSPAD-3D"].append(t + io)

            _, t = _timed(lambda: decide_features(extract_features(left, banks, cfg.roi), ensemble))
            report.samples["OSPAD-2D"].append(t + io / 2)

            def recognize():
                return encode(normalize(left, seg, cfg.rows, cfg.cols), bank)

            probe, t = _timed(recognize)
            if gallery is None:
                gallery = probe
            _, tm = _timed(lambda: match(probe, gallery, cfg.max_shift))
            report.samples["Iris Recognition"].append(t + tm)
    return report

