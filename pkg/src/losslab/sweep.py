"""Orchestration of the 2D load-temperature grid.

Each cell trains R replicates at one (load value, temperature value)
pair, measures per-model curvature and accuracy, then forms disjoint
replicate pairs for the pairwise metrics (mode connectivity, CKA,
parameter-space distance).  All randomness is derived from seeds keyed
by axis *values*, never indices, so extending the grid or reordering
cell execution cannot change any existing cell's numbers.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .cka import cka_between_models
from .curvature import CurvatureConfig, draw_metric_batch, top_eigenvalue, trace_hutchinson
from .curves import CurveTrainConfig, curve_profile, init_curve, mode_connectivity, train_curve
from .datasets import (
    Dataset,
    gen_blobs,
    gen_spirals,
    load_csv,
    mixup_probes,
    perturb_uniform,
    randomize_labels,
    raw_probes,
    subsample,
)
from .errors import DegenerateOutputError, DimensionError, DivergenceError, ParameterError
from .model import ModelSpec, ParamVector
from .rng import derive_seed
from .train import TrainConfig, evaluate, sgd_train

LOAD_KINDS = ("width", "n_samples", "noise_frac", "pixel_noise")
TEMP_KINDS = ("batch_size", "lr", "weight_decay")
_INT_KINDS = {"width", "n_samples", "batch_size"}

CSV_COLUMNS = [
    "load_kind", "load_value", "temp_kind", "temp_value",
    "n_replicates", "n_converged",
    "train_loss_mean", "train_loss_sd",
    "test_acc_mean", "test_acc_sd",
    "lambda_max_mean", "lambda_max_sd",
    "hessian_trace_mean", "hessian_trace_sd",
    "mc_mean", "mc_sd",
    "cka_mean", "cka_sd",
    "l2_mean", "l2_sd",
    "mu_hat", "beta_hat",
    "phase_label",
]


def l2_distance(theta_a: ParamVector, theta_b: ParamVector) -> float:
    """Euclidean distance between two parameter vectors."""
    if theta_a.layout != theta_b.layout:
        raise DimensionError("parameter layouts do not match")
    return float(np.linalg.norm(theta_a.values - theta_b.values))


@dataclass(frozen=True)
class DataRecipe:
    """How to build one task instance's train/test datasets."""

    kind: str = "blobs"
    n_train: int = 1000
    n_test: int = 200
    num_classes: int = 4
    dim: int = 8
    spread: float = 0.15
    arm_noise: float = 0.05
    path: str | None = None
    subsample_n: int | None = None
    noise_frac: float = 0.0
    pixel_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("blobs", "spirals", "csv"):
            raise ParameterError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ParameterError("csv recipe needs a path")


@dataclass(frozen=True)
class ProbeConfig:
    source: str = "mixup"
    m: int = 640
    alpha: float = 16.0
    noise: float = 0.0

    def __post_init__(self):
        if self.source not in ("mixup", "pixel_noise", "raw"):
            raise ParameterError(f"unknown probe source {self.source!r}")


@dataclass(frozen=True)
class Axis:
    kind: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        diffs = np.diff(np.asarray(self.values, dtype=np.float64))
        if len(self.values) < 1 or not (np.all(diffs > 0) or np.all(diffs < 0)):
            if len(self.values) != 1:
                raise ParameterError(f"axis values must be strictly monotone: {self.values}")


@dataclass(frozen=True)
class GridSpec:
    load_axis: Axis
    temp_axis: Axis
    base_model: ModelSpec
    base_train: TrainConfig
    recipe: DataRecipe
    replicates: int = 5
    curve: CurveTrainConfig = CurveTrainConfig()
    curvature: CurvatureConfig = CurvatureConfig()
    probes: ProbeConfig = ProbeConfig()
    base_seed: int = 0

    def __post_init__(self):
        if self.load_axis.kind not in LOAD_KINDS:
            raise ParameterError(f"load axis kind must be one of {LOAD_KINDS}")
        if self.temp_axis.kind not in TEMP_KINDS:
            raise ParameterError(f"temperature axis kind must be one of {TEMP_KINDS}")
        if self.replicates < 2:
            raise ParameterError("pairing requires at least 2 replicates")

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.load_axis.values), len(self.temp_axis.values))


@dataclass
class ReplicateMetrics:
    seed: int
    converged: bool
    train_loss: float | None = None
    train_acc: float | None = None
    test_loss: float | None = None
    test_acc: float | None = None
    lambda_max: float | None = None
    hessian_trace: float | None = None


@dataclass
class PairMetrics:
    replica_a: int
    replica_b: int
    mc: float | None = None
    cka: float | None = None
    l2: float | None = None
    profile: dict | None = None


@dataclass
class CellResult:
    load_kind: str
    load_value: float
    temp_kind: str
    temp_value: float
    n_replicates: int
    replicates: list[ReplicateMetrics] = field(default_factory=list)
    pairs: list[PairMetrics] = field(default_factory=list)
    phase_label: str = ""

    @property
    def n_converged(self) -> int:
        return sum(r.converged for r in self.replicates)

    @property
    def converged(self) -> bool:
        return self.n_converged > 0

    def _rep_values(self, name):
        return [getattr(r, name) for r in self.replicates if r.converged]

    def _pair_values(self, name):
        return [getattr(p, name) for p in self.pairs if getattr(p, name) is not None]

    @staticmethod
    def _mean_sd(values):
        if not values:
            return None, None
        arr = np.asarray(values, dtype=np.float64)
        sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return float(arr.mean()), sd

    def aggregate(self) -> dict:
        """Means and sample SDs over converged replicates / valid pairs."""
        out = {}
        for name in ("train_loss", "train_acc", "test_loss", "test_acc",
                     "lambda_max", "hessian_trace"):
            mean, sd = self._mean_sd(self._rep_values(name))
            out[f"{name}_mean"] = mean
            out[f"{name}_sd"] = sd
        for name in ("mc", "cka", "l2"):
            mean, sd = self._mean_sd(self._pair_values(name))
            out[f"{name}_mean"] = mean
            out[f"{name}_sd"] = sd
        out["mu_hat"] = out["cka_mean"]
        out["beta_hat"] = out["mc_mean"]
        return out


def _axis_value(kind: str, value):
    return int(value) if kind in _INT_KINDS else float(value)


def _seed_part(kind: str, value):
    """Canonical seed-key form of an axis value (ints stay ints)."""
    return _axis_value(kind, value)


def _base_dataset(recipe: DataRecipe, which: str) -> Dataset:
    seed = derive_seed(recipe.seed, "dataset", which)
    n = recipe.n_train if which == "train" else recipe.n_test
    if recipe.kind == "blobs":
        return gen_blobs(n, recipe.num_classes, recipe.dim, recipe.spread, seed)
    if recipe.kind == "spirals":
        return gen_spirals(n, recipe.num_classes, recipe.arm_noise, seed)
    ds = load_csv(recipe.path)
    # one file serves both roles: deterministic front/back split
    n_train = min(recipe.n_train, ds.n - 1)
    idx = np.arange(ds.n) < n_train
    keep = idx if which == "train" else ~idx
    return Dataset(ds.X[keep], ds.y[keep], ds.num_classes, ds.name)


def datasets_from_recipe(recipe: DataRecipe) -> tuple[Dataset, Dataset]:
    """Train/test datasets with the fixed pipeline applied to the train side.

    The pipeline order is subsample -> label randomization -> pixel
    noise, with stage seeds keyed by the stage parameter value, so any
    two recipes sharing a stage value share its output bit-for-bit.
    The test set stays clean.
    """
    train = _base_dataset(recipe, "train")
    test = _base_dataset(recipe, "test")
    if recipe.subsample_n is not None and recipe.subsample_n < train.n:
        train = subsample(
            train, recipe.subsample_n, derive_seed(recipe.seed, "subsample", recipe.subsample_n)
        )
    if recipe.noise_frac > 0.0:
        train = randomize_labels(
            train, recipe.noise_frac, derive_seed(recipe.seed, "labels", recipe.noise_frac)
        )
    if recipe.pixel_noise > 0.0:
        train = perturb_uniform(
            train, recipe.pixel_noise, derive_seed(recipe.seed, "pixel", recipe.pixel_noise)
        )
    return train, test


def build_cell_dataset(grid: GridSpec, load_value) -> tuple[Dataset, Dataset]:
    """Datasets for one grid column: the load axis overrides its recipe field."""
    recipe = grid.recipe
    kind = grid.load_axis.kind
    value = _axis_value(kind, load_value)
    if kind == "n_samples":
        recipe = replace(recipe, subsample_n=value)
    elif kind == "noise_frac":
        recipe = replace(recipe, noise_frac=float(value))
    elif kind == "pixel_noise":
        recipe = replace(recipe, pixel_noise=float(value))
    return datasets_from_recipe(recipe)


def cell_model_spec(grid: GridSpec, load_value) -> ModelSpec:
    base = grid.base_model
    if grid.load_axis.kind != "width":
        return base
    width = _axis_value("width", load_value)
    return ModelSpec(
        input_dim=base.input_dim,
        hidden_widths=tuple(width for _ in base.hidden_widths),
        num_classes=base.num_classes,
    )


def cell_train_config(grid: GridSpec, temp_value, seed: int) -> TrainConfig:
    kind = grid.temp_axis.kind
    value = _axis_value(kind, temp_value)
    return replace(grid.base_train, **{kind: value}, seed=seed)


def _build_probes(ds: Dataset, cfg: ProbeConfig, seed: int):
    if cfg.source == "mixup":
        return mixup_probes(ds, cfg.m, cfg.alpha, seed)
    probes = raw_probes(ds, cfg.m, derive_seed(seed, "rows"))
    if cfg.source == "pixel_noise":
        probes = perturb_uniform(probes, cfg.noise, derive_seed(seed, "noise"))
    return probes


def run_cell(grid: GridSpec, i: int, j: int) -> CellResult:
    """Train and measure one (load, temperature) cell; divergence is data."""
    load_value = _axis_value(grid.load_axis.kind, grid.load_axis.values[i])
    temp_value = _axis_value(grid.temp_axis.kind, grid.temp_axis.values[j])
    key = (grid.load_axis.kind, _seed_part(grid.load_axis.kind, load_value),
           grid.temp_axis.kind, _seed_part(grid.temp_axis.kind, temp_value))

    spec = cell_model_spec(grid, load_value)
    train_ds, test_ds = build_cell_dataset(grid, load_value)
    cell = CellResult(
        load_kind=grid.load_axis.kind, load_value=load_value,
        temp_kind=grid.temp_axis.kind, temp_value=temp_value,
        n_replicates=grid.replicates,
    )

    thetas: dict[int, ParamVector] = {}
    wd = None
    for r in range(grid.replicates):
        seed = derive_seed(grid.base_seed, "train", *key, r)
        cfg = cell_train_config(grid, temp_value, seed)
        wd = cfg.weight_decay
        rep = ReplicateMetrics(seed=seed, converged=False)
        try:
            theta, _ = sgd_train(spec, train_ds, test_ds, cfg)
        except DivergenceError:
            cell.replicates.append(rep)
            continue
        rep.converged = True
        tr = evaluate(spec, theta, train_ds, weight_decay=cfg.weight_decay)
        te = evaluate(spec, theta, test_ds)
        rep.train_loss = tr.loss
        rep.train_acc = tr.acc
        rep.test_loss = te.loss
        rep.test_acc = te.acc
        curv_cfg = replace(grid.curvature, seed=derive_seed(grid.base_seed, "curvature", *key, r))
        batch = draw_metric_batch(train_ds, curv_cfg)
        rep.lambda_max = top_eigenvalue(spec, theta, batch, cfg.weight_decay, curv_cfg).value
        rep.hessian_trace = trace_hutchinson(spec, theta, batch, cfg.weight_decay, curv_cfg).value
        thetas[r] = theta
        cell.replicates.append(rep)

    converged_ids = sorted(thetas)
    if len(converged_ids) >= 2:
        probes = _build_probes(train_ds, grid.probes,
                               derive_seed(grid.base_seed, "probes", *key))
        for a, b in zip(converged_ids[0::2], converged_ids[1::2]):
            pair = PairMetrics(replica_a=a, replica_b=b)
            pair.l2 = l2_distance(thetas[a], thetas[b])
            try:
                pair.cka = cka_between_models(spec, thetas[a], thetas[b], probes)
            except DegenerateOutputError:
                pair.cka = None
            curve_cfg = replace(
                grid.curve,
                batch_size=cell_train_config(grid, temp_value, 0).batch_size,
                seed=derive_seed(grid.base_seed, "curve", *key, a, b),
            )
            try:
                curve = train_curve(spec, init_curve(thetas[a], thetas[b], grid.curve.k),
                                    train_ds, curve_cfg, weight_decay=wd)
                profile = curve_profile(spec, curve, train_ds, curve_cfg.t_grid)
                pair.mc = mode_connectivity(profile)
                pair.profile = profile.to_dict()
            except DivergenceError:
                pair.mc = None
            cell.pairs.append(pair)
    return cell


def _cell_task(args):
    grid, i, j = args
    return (i, j, run_cell(grid, i, j))


def run_sweep(grid: GridSpec, workers: int = 1) -> tuple[list[CellResult], dict]:
    """All grid cells (optionally in parallel) plus a provenance manifest."""
    t0 = time.time()
    tasks = [(grid, i, j) for i in range(len(grid.load_axis.values))
             for j in range(len(grid.temp_axis.values))]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_task, tasks))
    else:
        results = [_cell_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    cells = [r[2] for r in results]
    manifest = {
        "schema": 1,
        "version": __version__,
        "grid": grid_to_dict(grid),
        "base_seed": grid.base_seed,
        "workers": workers,
        "wall_clock_s": time.time() - t0,
    }
    return cells, manifest


def grid_to_dict(grid: GridSpec) -> dict:
    return dataclasses.asdict(grid)


def _fmt(value) -> str:
    if value is None:
        return ""
    return "%.10g" % value


def results_to_csv(cells: list[CellResult]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for cell in cells:
        agg = cell.aggregate()
        row = [
            cell.load_kind, _fmt(cell.load_value),
            cell.temp_kind, _fmt(cell.temp_value),
            str(cell.n_replicates), str(cell.n_converged),
            _fmt(agg["train_loss_mean"]), _fmt(agg["train_loss_sd"]),
            _fmt(agg["test_acc_mean"]), _fmt(agg["test_acc_sd"]),
            _fmt(agg["lambda_max_mean"]), _fmt(agg["lambda_max_sd"]),
            _fmt(agg["hessian_trace_mean"]), _fmt(agg["hessian_trace_sd"]),
            _fmt(agg["mc_mean"]), _fmt(agg["mc_sd"]),
            _fmt(agg["cka_mean"]), _fmt(agg["cka_sd"]),
            _fmt(agg["l2_mean"]), _fmt(agg["l2_sd"]),
            _fmt(agg["mu_hat"]), _fmt(agg["beta_hat"]),
            cell.phase_label,
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_results_csv(cells: list[CellResult], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(results_to_csv(cells))


def rows_to_csv(rows: list[dict]) -> str:
    """Re-serialize parsed CSV rows (used when writing back phase labels)."""
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        parts = []
        for name in CSV_COLUMNS:
            value = row.get(name)
            if name in ("load_kind", "temp_kind", "phase_label"):
                parts.append(value or "")
            elif name in ("n_replicates", "n_converged"):
                parts.append(str(value))
            else:
                parts.append(_fmt(value))
        lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def read_results_csv(path) -> list[dict]:
    """Rows as dicts; numeric fields parsed, absent metrics become None."""
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        row = {}
        for name, value in zip(header, parts):
            if name in ("load_kind", "temp_kind", "phase_label"):
                row[name] = value
            elif name in ("n_replicates", "n_converged"):
                row[name] = int(value)
            else:
                row[name] = float(value) if value else None
        rows.append(row)
    return rows


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
