"""Texture PAD: multi-scale BSIF histograms and an early-stopping ensemble."""
from __future__ import annotations

import os
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

import numpy as np

from .classifiers import MLP, DecisionTree, LinearSVM, RandomForest
from .encoding import FilterBank, binarize_responses, default_bank_path, load_filter_bank
from .errors import IrisError, MalformedModelFile, MissingFilterBank, SingleClassTrainingSet
from .imaging import center_crop, correlate_bank
from .pad3d import PadOutcome

DEFAULT_SCALES = ((8, 5), (8, 9), (8, 13), (8, 17))
DEFAULT_ROI = 300


def bank_filename(n: int, s: int) -> str:
    return f"pad_{n}x{s}x{s}.bsif"


def resolve_banks(scales, bank_dir=None) -> list:
    """Load one filter bank per ``(n, s)`` scale.

    ``bank_dir`` is searched before the banks bundled with the package.
    Entries that are already :class:`FilterBank` objects pass through.
    """
    banks = []
    for scale in scales:
        if isinstance(scale, FilterBank):
            banks.append(scale)
            continue
        n, s = scale
        name = bank_filename(n, s)
        candidates = []
        if bank_dir is not None:
            candidates.append(os.path.join(bank_dir, name))
        candidates.append(default_bank_path(name))
        for path in candidates:
            if os.path.isfile(path):
                bank = load_filter_bank(path)
                if bank.n != n or bank.s != s:
                    raise MissingFilterBank(f"{path} holds {bank.n}x{bank.s}, wanted {n}x{s}")
                banks.append(bank)
                break
        else:
            raise MissingFilterBank(f"no filter bank file {name} for scale n={n}, s={s}")
    return banks


def bsif_histogram(img, bank: FilterBank) -> np.ndarray:
    """Normalized histogram of n-bit BSIF codewords (filter k sets bit k)."""
    bits = binarize_responses(correlate_bank(img, bank.kernels), bank.kernels)
    weights = (1 << np.arange(bank.n)).reshape(-1, 1, 1)
    codes = (bits.astype(np.int64) * weights).sum(axis=0)
    hist = np.bincount(codes.ravel(), minlength=1 << bank.n).astype(np.float64)
    return hist / hist.sum()


def extract_features(img, scales=DEFAULT_SCALES, roi: int = DEFAULT_ROI, bank_dir=None) -> np.ndarray:
    """Concatenated per-scale BSIF histograms of the central ``roi`` square."""
    crop = center_crop(img, roi, roi)
    banks = resolve_banks(scales, bank_dir)
    return np.concatenate([bsif_histogram(crop, b) for b in banks])


# ---------------------------------------------------------------------------
# ensemble


@dataclass
class Ensemble:
    members: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.members) < 3 or len(self.members) % 2 == 0:
            raise ValueError(f"ensemble needs an odd member count >= 3, got {len(self.members)}")

    @property
    def dim(self) -> int:
        return self.members[0].dim


@dataclass(frozen=True)
class MemberRecipe:
    kind: str
    seed_offset: int = 0
    hidden: int = 32
    n_trees: int = 25
    max_depth: int = 8


DEFAULT_RECIPE = (
    MemberRecipe("linear-svm", 0),
    MemberRecipe("linear-svm", 1),
    MemberRecipe("mlp", 2, hidden=32),
    MemberRecipe("random-forest", 3, n_trees=25, max_depth=8),
    MemberRecipe("random-forest", 4, n_trees=25, max_depth=8),
)


def train_ensemble(X, y, recipe=DEFAULT_RECIPE, seed: int = 0) -> Ensemble:
    """Train every member on the full labeled set (``y``: 1 attack, 0 live)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise SingleClassTrainingSet("training data must contain both live and attack samples")
    if len(recipe) < 3 or len(recipe) % 2 == 0:
        raise ValueError("ensemble recipe needs an odd member count >= 3")
    members = []
    for r in recipe:
        s = seed * 1000 + r.seed_offset
        if r.kind == "linear-svm":
            members.append(LinearSVM.fit(X, y, seed=s))
        elif r.kind == "mlp":
            members.append(MLP.fit(X, y, seed=s, hidden=r.hidden))
        elif r.kind == "random-forest":
            members.append(RandomForest.fit(X, y, seed=s, n_trees=r.n_trees, max_depth=r.max_depth))
        else:
            raise ValueError(f"unknown member kind {r.kind!r}")
    return Ensemble(members)


def majority_vote(voters, workers: int = 1):
    """Evaluate zero-argument ``voters`` until the majority is settled.

    Returns ``(attack, attack_votes, evaluated)``. Sequential evaluation
    follows list order; with ``workers > 1`` members run concurrently and
    pending ones are cancelled once either side holds more than half of the
    votes. The decision always equals the exhaustive majority.
    """
    total = len(voters)
    attack = live = 0
    if workers <= 1:
        for v in voters:
            if v():
                attack += 1
            else:
                live += 1
            if 2 * attack > total or 2 * live > total:
                break
        return 2 * attack > total, attack, attack + live

    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = {pool.submit(v) for v in voters}
        while pending and not (2 * attack > total or 2 * live > total):
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            for fut in done:
                if fut.result():
                    attack += 1
                else:
                    live += 1
        for fut in pending:
            fut.cancel()
    return 2 * attack > total, attack, attack + live


def ospad2d_decide(img, ensemble: Ensemble, scales=DEFAULT_SCALES, roi: int = DEFAULT_ROI,
                   bank_dir=None, workers: int = 1) -> PadOutcome:
    """Early-stopping majority vote; score is the attack fraction among evaluated members."""
    x = extract_features(img, scales, roi, bank_dir)
    return decide_features(x, ensemble, workers)


def decide_features(x, ensemble: Ensemble, workers: int = 1) -> PadOutcome:
    if len(x) != ensemble.dim:
        raise MissingFilterBank(f"feature dim {len(x)} does not match model dim {ensemble.dim}")
    voters = [lambda m=m: m.vote(x) for m in ensemble.members]
    is_attack, attack_votes, evaluated = majority_vote(voters, workers)
    return PadOutcome(score=attack_votes / evaluated, decision="attack" if is_attack else "live",
                      source="pad2d", threshold=0.5,
                      details={"evaluated": evaluated, "members": len(ensemble.members)})


# ---------------------------------------------------------------------------
# model files


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def format_ensemble(ens: Ensemble) -> str:
    out = [f"ENSEMBLE 1 {len(ens.members)}"]
    for m in ens.members:
        if isinstance(m, LinearSVM):
            out.append(f"KIND linear-svm {m.dim}")
            out += [f"shift {_floats(m.shift)}", f"scale {_floats(m.scale)}",
                    f"weights {_floats(m.weights)}", f"bias {float(m.bias)!r}"]
        elif isinstance(m, MLP):
            out.append(f"KIND mlp {m.dim} {m.hidden}")
            out += [f"shift {_floats(m.shift)}", f"scale {_floats(m.scale)}",
                    f"w1 {_floats(m.w1)}", f"b1 {_floats(m.b1)}",
                    f"w2 {_floats(m.w2)}", f"b2 {float(m.b2)!r}"]
        elif isinstance(m, RandomForest):
            out.append(f"KIND random-forest {m.dim} {len(m.trees)}")
            for t in m.trees:
                out.append(f"TREE {len(t.vote)}")
                for i in range(len(t.vote)):
                    out.append(f"{t.feature[i]} {float(t.threshold[i])!r} {t.left[i]} {t.right[i]} {t.vote[i]}")
        else:
            raise TypeError(f"cannot serialize {type(m).__name__}")
    return "\n".join(out) + "\n"


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> list:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].split()
            self.pos += 1
            if line:
                return line
        raise MalformedModelFile("unexpected end of model file")

    def vector(self, key: str, count: int) -> np.ndarray:
        line = self.next()
        if line[0] != key or len(line) != count + 1:
            raise MalformedModelFile(f"line {self.pos}: expected '{key}' with {count} values")
        try:
            return np.array([float(v) for v in line[1:]])
        except ValueError:
            raise MalformedModelFile(f"line {self.pos}: non-numeric value") from None


def _ints(line, count, where):
    if len(line) != count:
        raise MalformedModelFile(f"{where}: expected {count} fields")
    try:
        return [int(v) for v in line]
    except ValueError:
        raise MalformedModelFile(f"{where}: non-integer field") from None


def parse_ensemble(text: str) -> Ensemble:
    src = _Lines(text)
    head = src.next()
    if len(head) != 3 or head[0] != "ENSEMBLE" or head[1] != "1":
        raise MalformedModelFile("header must be 'ENSEMBLE 1 <count>'")
    (count,) = _ints(head[2:], 1, "header")
    members = []
    for _ in range(count):
        line = src.next()
        if len(line) < 3 or line[0] != "KIND":
            raise MalformedModelFile(f"line {src.pos}: expected a KIND block")
        kind = line[1]
        if kind == "linear-svm":
            (dim,) = _ints(line[2:], 1, f"line {src.pos}")
            shift, scale = src.vector("shift", dim), src.vector("scale", dim)
            w = src.vector("weights", dim)
            (b,) = src.vector("bias", 1)
            members.append(LinearSVM(w, float(b), shift, scale))
        elif kind == "mlp":
            dim, hidden = _ints(line[2:], 2, f"line {src.pos}")
            shift, scale = src.vector("shift", dim), src.vector("scale", dim)
            w1 = src.vector("w1", hidden * dim).reshape(hidden, dim)
            b1, w2 = src.vector("b1", hidden), src.vector("w2", hidden)
            (b2,) = src.vector("b2", 1)
            members.append(MLP(w1, b1, w2, float(b2), shift, scale))
        elif kind == "random-forest":
            dim, n_trees = _ints(line[2:], 2, f"line {src.pos}")
            trees = []
            for _ in range(n_trees):
                tl = src.next()
                if tl[0] != "TREE":
                    raise MalformedModelFile(f"line {src.pos}: expected TREE")
                (n_nodes,) = _ints(tl[1:], 1, f"line {src.pos}")
                rows = []
                for _ in range(n_nodes):
                    f = src.next()
                    if len(f) != 5:
                        raise MalformedModelFile(f"line {src.pos}: tree node needs 5 fields")
                    try:
                        rows.append((int(f[0]), float(f[1]), int(f[2]), int(f[3]), int(f[4])))
                    except ValueError:
                        raise MalformedModelFile(f"line {src.pos}: bad tree node") from None
                cols = list(zip(*rows))
                tree = DecisionTree(*(np.array(c) for c in cols))
                _check_tree(tree, dim, src.pos)
                trees.append(tree)
            members.append(RandomForest(trees, dim))
        else:
            raise MalformedModelFile(f"unknown member kind {kind!r}")
    dims = {m.dim for m in members}
    if len(dims) != 1:
        raise MalformedModelFile("members disagree on feature dimension")
    try:
        return Ensemble(members)
    except ValueError as exc:
        raise MalformedModelFile(str(exc)) from exc


def _check_tree(t: DecisionTree, dim: int, where) -> None:
    n = len(t.vote)
    # every internal node must point strictly forward so traversal terminates
    for i in range(n):
        if t.vote[i] < 0:
            if not (0 <= t.feature[i] < dim and i < t.left[i] < n and i < t.right[i] < n):
                raise MalformedModelFile(f"near line {where}: bad internal node {i}")
        elif t.vote[i] not in (0, 1):
            raise MalformedModelFile(f"near line {where}: leaf vote must be 0 or 1")


def save_ensemble(ens: Ensemble, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_ensemble(ens))


def load_ensemble(path) -> Ensemble:
    try:
        with open(path) as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise MalformedModelFile(f"{path}: {exc}") from exc
    return parse_ensemble(text)


def read_feature_csv(path):
    """``label,v1,...,vD`` rows; label is 1/attack or 0/live/bonafide."""
    X, y = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            label = parts[0].strip().lower()
            if label in ("1", "attack"):
                y.append(1)
            elif label in ("0", "live", "bonafide"):
                y.append(0)
            elif lineno == 1:
                continue
            else:
                raise IrisError(f"{path}:{lineno}: unknown label {parts[0]!r}", stage="train-pad2d")
            try:
                X.append([float(v) for v in parts[1:]])
            except ValueError:
                raise IrisError(f"{path}:{lineno}: non-numeric feature", stage="train-pad2d") from None
    if not X or len({len(r) for r in X}) != 1:
        raise IrisError(f"{path}: empty or ragged feature file", stage="train-pad2d")
    return np.array(X), np.array(y)


def format_feature_row(label: int, x) -> str:
    return f"{int(label)}," + ",".join(repr(float(v)) for v in x)
