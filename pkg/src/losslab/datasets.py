"""Synthetic classification datasets, CSV ingestion, and input perturbations.

The perturbations implement the "load" side of the control grid: label
randomization degrades data quality, subsampling shrinks data quantity,
and additive uniform noise corrupts features.  Probe sets are the
perturbed inputs similarity metrics are evaluated on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError
from .rng import Rng

# Arm geometry for gen_spirals: radius r = R0 + (R1 - R0) * phi / PHI_MAX
# along angle phi in [0, PHI_MAX], rotated by 2*pi*c/C per class.
SPIRAL_R0 = 0.25
SPIRAL_R1 = 1.0
SPIRAL_PHI_MAX = 3.0 * math.pi


@dataclass
class Dataset:
    """Feature matrix with integer labels; clean_y kept once labels are randomized."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = "dataset"
    clean_y: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ParameterError("X rows and label count differ")
        if self.X.shape[0] < 1:
            raise ParameterError("dataset must contain at least one row")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ParameterError("labels must lie in [0, num_classes)")
        if self.clean_y is not None:
            self.clean_y = np.asarray(self.clean_y, dtype=np.int64).ravel()
            if self.clean_y.size != self.y.size:
                raise ParameterError("clean_y length differs from y")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass
class ProbeSet:
    """Inputs for similarity measurement plus a descriptor of how they were made."""

    X: np.ndarray
    source: str

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] < 2:
            raise ParameterError("probe set needs at least two rows")

    @property
    def m(self) -> int:
        return self.X.shape[0]


def _class_counts(n: int, num_classes: int) -> list[int]:
    base, extra = divmod(n, num_classes)
    return [base + (1 if c < extra else 0) for c in range(num_classes)]


def gen_blobs(n: int, num_classes: int, dim: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs around class centers spaced on the unit circle."""
    if n < num_classes or num_classes < 2:
        raise ParameterError("need n >= num_classes >= 2")
    if dim < 2:
        raise ParameterError("blobs need dim >= 2")
    if spread < 0:
        raise ParameterError("spread must be >= 0")
    rng = Rng(seed)
    counts = _class_counts(n, num_classes)
    rows = []
    labels = []
    for c, count in enumerate(counts):
        center = np.zeros(dim)
        ang = 2.0 * math.pi * c / num_classes
        center[0] = math.cos(ang)
        center[1] = math.sin(ang)
        noise = rng.normals(count * dim).reshape(count, dim)
        rows.append(center + spread * noise)
        labels.extend([c] * count)
    return Dataset(np.vstack(rows), np.array(labels), num_classes, name="blobs")


def gen_spirals(n: int, num_classes: int, noise: float, seed: int) -> Dataset:
    """Interleaved 2-D Archimedean spiral arms, one per class."""
    if n < num_classes or num_classes < 2:
        raise ParameterError("need n >= num_classes >= 2")
    if noise < 0:
        raise ParameterError("noise must be >= 0")
    rng = Rng(seed)
    counts = _class_counts(n, num_classes)
    rows = []
    labels = []
    for c, count in enumerate(counts):
        phi = rng.uniforms(count) * SPIRAL_PHI_MAX
        r = SPIRAL_R0 + (SPIRAL_R1 - SPIRAL_R0) * phi / SPIRAL_PHI_MAX
        if noise > 0:
            r = r + noise * rng.normals(count)
        ang = phi + 2.0 * math.pi * c / num_classes
        rows.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        labels.extend([c] * count)
    return Dataset(np.vstack(rows), np.array(labels), num_classes, name="spirals")


def write_csv(ds: Dataset, path) -> None:
    """Canonical CSV form: header comment, '%.17g' floats, LF endings."""
    lines = [f"# d={ds.dim} classes={ds.num_classes}\n"]
    for i in range(ds.n):
        feats = ",".join("%.17g" % v for v in ds.X[i])
        lines.append(f"{feats},{ds.y[i]}\n")
    with open(path, "w", newline="") as fh:
        fh.writelines(lines)


def load_csv(path) -> Dataset:
    with open(path, "r") as fh:
        raw = fh.readlines()
    if not raw or not raw[0].startswith("#"):
        raise FormatError(f"{path}:1: missing '# d=<d> classes=<C>' header")
    header = raw[0][1:].split()
    try:
        fields = dict(part.split("=", 1) for part in header)
        dim = int(fields["d"])
        num_classes = int(fields["classes"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}:1: malformed header: {raw[0].strip()!r}") from exc
    rows = []
    labels = []
    for lineno, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        parts = line.strip().split(",")
        if len(parts) != dim + 1:
            raise FormatError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts[:-1]])
            label = int(parts[-1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: unparsable value") from exc
        if not 0 <= label < num_classes:
            raise FormatError(f"{path}:{lineno}: label {label} out of range [0, {num_classes})")
        labels.append(label)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Dataset(np.array(rows), np.array(labels), num_classes, name=name)


def randomize_labels(ds: Dataset, frac: float, seed: int) -> Dataset:
    """Flip exactly round(frac*n) labels to a uniformly drawn *different* class."""
    if not 0.0 <= frac <= 1.0:
        raise ParameterError("frac must lie in [0, 1]")
    if ds.num_classes < 2:
        raise ParameterError("label randomization needs num_classes >= 2")
    clean = ds.clean_y if ds.clean_y is not None else ds.y.copy()
    y = ds.y.copy()
    k = round(frac * ds.n)
    if k:
        rng = Rng(seed)
        picked = rng.choose(ds.n, k)
        for i in picked:
            other = rng.integer(ds.num_classes - 1)
            if other >= y[i]:
                other += 1
            y[i] = other
    return Dataset(ds.X.copy(), y, ds.num_classes, name=ds.name, clean_y=clean)


def subsample(ds: Dataset, n_keep: int, seed: int) -> Dataset:
    """Uniform without-replacement row selection, original order preserved."""
    if not 1 <= n_keep <= ds.n:
        raise ParameterError(f"n_keep must lie in [1, {ds.n}]")
    idx = Rng(seed).choose(ds.n, n_keep)
    clean = ds.clean_y[idx] if ds.clean_y is not None else None
    return Dataset(ds.X[idx].copy(), ds.y[idx].copy(), ds.num_classes, ds.name, clean)


def perturb_uniform(data, magnitude: float, seed: int):
    """Add independent Uniform[0, magnitude] noise to every feature entry."""
    if magnitude < 0:
        raise ParameterError("magnitude must be >= 0")
    if isinstance(data, Dataset):
        if magnitude == 0:
            return Dataset(data.X.copy(), data.y.copy(), data.num_classes, data.name, data.clean_y)
        noise = Rng(seed).uniforms(data.X.size).reshape(data.X.shape) * magnitude
        return Dataset(data.X + noise, data.y.copy(), data.num_classes, data.name, data.clean_y)
    if isinstance(data, ProbeSet):
        source = f"pixel_noise(u={magnitude:g})" if data.source == "raw" else f"{data.source}+uniform(0,{magnitude:g})"
        if magnitude == 0:
            return ProbeSet(data.X.copy(), source)
        noise = Rng(seed).uniforms(data.X.size).reshape(data.X.shape) * magnitude
        return ProbeSet(data.X + noise, source)
    raise ParameterError(f"cannot perturb object of type {type(data)!r}")


def raw_probes(ds: Dataset, m: int, seed: int) -> ProbeSet:
    """m training rows sampled with replacement, unmodified."""
    if m < 2:
        raise ParameterError("probe count must be >= 2")
    rng = Rng(seed)
    idx = np.array([rng.integer(ds.n) for _ in range(m)])
    return ProbeSet(ds.X[idx].copy(), "raw")


def mixup_probes(
    ds: Dataset,
    m: int = 640,
    alpha: float = 16.0,
    seed: int = 0,
    _fixed_lambda: float | None = None,
) -> ProbeSet:
    """Convex combinations of distinct training-row pairs, Beta(alpha, alpha) weights."""
    if ds.n < 2:
        raise ParameterError("mixup needs at least two rows")
    if m < 2:
        raise ParameterError("probe count must be >= 2")
    if alpha <= 0:
        raise ParameterError("alpha must be > 0")
    rng = Rng(seed)
    out = np.empty((m, ds.dim), dtype=np.float64)
    for i in range(m):
        a = rng.integer(ds.n)
        b = rng.integer(ds.n - 1)
        if b >= a:
            b += 1
        lam = rng.beta(alpha) if _fixed_lambda is None else _fixed_lambda
        out[i] = lam * ds.X[a] + (1.0 - lam) * ds.X[b]
    return ProbeSet(out, f"mixup(alpha={alpha:g})")
