"""Experiment pipeline: dataset preparation, training, evaluation, and the
hybrid-vs-classical comparison harness.

Each sample pairs a zero-filled undersampled SOS image (network input) with
the fully sampled SOS image (target), both divided by the max of the
zero-filled image so inference never needs ground truth. One mask is drawn
per run and shared across slices unless per-slice masks are requested.
Everything is seeded: rerunning a config reproduces reports byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, io, metrics, mri, quanv
from .nn import Adam, HybridNetwork, build_hybrid_network, mse_loss
from .qsim import CircuitConfig


class NumericError(Exception):
    """Training or evaluation produced non-finite numbers (CLI exit code 4)."""


@dataclass(frozen=True)
class TrainConfig:
    """Resolved experiment configuration; serializes to key=value text."""

    front_end: str = "quantum"
    accel: float = 4.0
    center_fraction: float = 0.0  # 0 = by acceleration: 0.08 for R <= 2, else 0.04
    mask_seed: int = 1234
    per_slice_masks: bool = False
    epochs: int = 60
    batch_size: int = 4
    lr: float = 1e-3
    width_scale: float = 1.0
    init_seed: int = 0
    image_size: int = 64
    coils: int = 4
    n_ellipses: int = 6
    train_slices: int = 32
    test_slices: int = 8
    phantom_seed_train: int = 100
    phantom_seed_test: int = 900
    data_dir: str = ""  # empty = synthetic phantom source
    precompute_quanv: bool = True
    readout: str = "mean-z"
    topology: str = "chain"
    angle_scale: float = 1.0
    precision: str = "float64"
    accels: str = "2,4"  # accelerations covered by `compare`
    out_dir: str = ""

    def circuit_config(self) -> CircuitConfig:
        return CircuitConfig(self.topology, self.readout, self.angle_scale)

    def resolved_center_fraction(self) -> float:
        if self.center_fraction > 0:
            return self.center_fraction
        return 0.08 if self.accel <= 2 else 0.04

    def dtype(self):
        if self.precision == "float64":
            return np.float64
        if self.precision == "float32":
            return np.float32
        raise ValueError(f"precision must be float64 or float32, got {self.precision!r}")

    def accel_list(self) -> list[float]:
        values = [float(tok) for tok in self.accels.split(",") if tok.strip()]
        if not values:
            raise ValueError("accels must list at least one acceleration")
        return values


def config_to_text(cfg: TrainConfig) -> str:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in dataclasses.fields(cfg)]
    return "\n".join(lines) + "\n"


def config_from_mapping(values: dict[str, str], base: TrainConfig | None = None) -> TrainConfig:
    """Build a TrainConfig from parsed key=value pairs; unknown keys rejected."""
    base = base or TrainConfig()
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, raw in values.items():
        ftype = fields[key].type
        if ftype == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0"):
                raise ValueError(f"config key {key}: expected a boolean, got {raw!r}")
            kwargs[key] = low in ("true", "1")
        elif ftype == "int":
            kwargs[key] = int(raw)
        elif ftype == "float":
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return replace(base, **kwargs)


@dataclass
class SamplePair:
    """Normalized (input, target) images plus the scale that undoes them."""

    input: np.ndarray
    target: np.ndarray
    scale: float
    index: int


def _slice_kspaces(cfg: TrainConfig, split: str):
    """Yield (index, fully sampled k-space) for every slice of a split."""
    if cfg.data_dir:
        split_dir = Path(cfg.data_dir) / split
        paths = sorted(split_dir.glob("kspace_*.qmrt"))
        if not paths:
            raise ValueError(f"no kspace_*.qmrt files in {split_dir}")
        for i, path in enumerate(paths):
            kspace = io.read_tensor(path)
            if kspace.ndim != 3 or not np.iscomplexobj(kspace):
                raise io.FormatError(f"{path}: expected complex (coils, H, W) k-space")
            yield i, mri.pad_center_pow2(kspace)
    else:
        count = cfg.train_slices if split == "train" else cfg.test_slices
        if count < 1:
            raise ValueError(f"{split} split has no slices")
        base = cfg.phantom_seed_train if split == "train" else cfg.phantom_seed_test
        for i in range(count):
            spec = mri.PhantomSpec(cfg.image_size, cfg.image_size,
                                   cfg.n_ellipses, cfg.coils, seed=base + i)
            yield i, mri.phantom_generate(spec)[1]


def prepare_dataset(cfg: TrainConfig, split: str = "train") -> list[SamplePair]:
    """Undersample, zero-fill, SOS-combine, and normalize every slice."""
    pairs = []
    mask = None
    for i, kspace in _slice_kspaces(cfg, split):
        if mask is None or cfg.per_slice_masks:
            seed = cfg.mask_seed + i if cfg.per_slice_masks else cfg.mask_seed
            mask = mri.make_cartesian_mask(kspace.shape[-2], kspace.shape[-1],
                                           cfg.accel, cfg.resolved_center_fraction(), seed)
        target = mri.sos_combine(mri.zero_fill_recon(kspace))
        zf = mri.sos_combine(mri.zero_fill_recon(mri.apply_mask(kspace, mask)))
        zf, scale = mri.normalize(zf)
        pairs.append(SamplePair(input=zf, target=target / scale, scale=scale, index=i))
    return pairs


def run_mask(cfg: TrainConfig) -> mri.SamplingMask:
    """The shared mask a (non per-slice) run applies to every slice."""
    size = cfg.image_size if not cfg.data_dir else None
    if size is None:
        # infer dims from the first slice
        _, kspace = next(iter(_slice_kspaces(cfg, "test")))
        return mri.make_cartesian_mask(kspace.shape[-2], kspace.shape[-1],
                                       cfg.accel, cfg.resolved_center_fraction(), cfg.mask_seed)
    return mri.make_cartesian_mask(size, size, cfg.accel,
                                   cfg.resolved_center_fraction(), cfg.mask_seed)


def _feature_cache_key(image: np.ndarray, config: CircuitConfig) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(image, dtype=np.float64).tobytes())
    digest.update(repr(config).encode())
    return digest.hexdigest()


def quanv_features(images: list[np.ndarray], config: CircuitConfig,
                   cache_dir=None) -> np.ndarray:
    """Quanvolve a list of images into an (N, C, h, w) feature stack.

    With a cache_dir, per-image results are persisted keyed by (image hash,
    circuit config) and reused across runs.
    """
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
    feats = []
    for image in images:
        cache_path = None
        if cache_dir is not None:
            cache_path = cache_dir / f"{_feature_cache_key(image, config)}.qmrt"
            if cache_path.exists():
                feats.append(io.read_tensor(cache_path))
                continue
        fmap = quanv.quanvolve(image, config)
        if fmap.ndim == 2:
            fmap = fmap[np.newaxis]
        if cache_path is not None:
            io.write_tensor(cache_path, fmap)
        feats.append(fmap)
    return np.stack(feats)


@dataclass
class TrainResult:
    network: HybridNetwork
    loss_history: list[float]
    checkpoint_path: Path | None


def write_run_metadata(out_dir, config_text: str) -> None:
    """Drop the resolved config and tool version into an artifact directory."""
    out_dir = Path(out_dir)
    (out_dir / "config.resolved").write_text(config_text)
    meta = f"quanvmri {__version__}\nconfig_sha256 {io.config_hash(config_text)}\n"
    (out_dir / "meta.txt").write_text(meta)


def train(cfg: TrainConfig, out_dir=None, pairs: list[SamplePair] | None = None) -> TrainResult:
    """Minimize mean MSE over the training pairs with Adam.

    Deterministic per config: weight init, batch order, and the quantum
    features all derive from seeds in `cfg`. Writes checkpoint + loss history
    + resolved config when `out_dir` is given. Raises NumericError if the
    loss goes non-finite (learning rate too high or corrupt data).
    """
    if pairs is None:
        pairs = prepare_dataset(cfg, "train")
    if not pairs:
        raise ValueError("training needs at least one sample pair")
    dtype = cfg.dtype()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    net = build_hybrid_network(cfg.front_end, cfg.circuit_config(),
                               cfg.width_scale, cfg.init_seed, dtype)
    targets = np.stack([p.target for p in pairs])[:, None].astype(dtype)
    if cfg.front_end == "quantum":
        cache = out_dir / "quanv_cache" if (out_dir is not None and cfg.precompute_quanv) else None
        inputs = quanv_features([p.input for p in pairs], cfg.circuit_config(), cache).astype(dtype)
        forward, backward = net.forward_features, net.backward_features
    else:
        inputs = np.stack([p.input for p in pairs])[:, None].astype(dtype)
        forward, backward = net.forward, net.backward

    optimizer = Adam(net.parameters(), lr=cfg.lr)
    n = len(pairs)
    history = []
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.init_seed, 7, epoch]).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred = forward(inputs[idx], True)
            loss, grad = mse_loss(pred, targets[idx])
            optimizer.zero_grad()
            backward(grad)
            optimizer.step()
            epoch_loss += loss * len(idx)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise NumericError(
                f"non-finite loss at epoch {epoch}; lower the learning rate or check the data"
            )
        history.append(epoch_loss)

    checkpoint_path = None
    if out_dir is not None:
        config_text = config_to_text(cfg)
        checkpoint_path = out_dir / "checkpoint.qmrc"
        arrays = dict(net.state_dict())
        arrays.update(optimizer.state_dict())
        io.save_checkpoint(checkpoint_path, arrays, config_text)
        lines = ["epoch,loss"] + [f"{i},{format(v, '.12g')}" for i, v in enumerate(history)]
        (out_dir / "loss_history.csv").write_text("\n".join(lines) + "\n")
        write_run_metadata(out_dir, config_text)
    return TrainResult(net, history, checkpoint_path)


def load_network(checkpoint_path) -> tuple[HybridNetwork, TrainConfig, str]:
    """Rebuild a network (weights + config) from a QMRC checkpoint."""
    arrays, config_text, config_sha = io.load_checkpoint(checkpoint_path)
    cfg = config_from_mapping(io.parse_config_text(config_text))
    net = build_hybrid_network(cfg.front_end, cfg.circuit_config(),
                               cfg.width_scale, cfg.init_seed, cfg.dtype())
    net.load_state_dict(arrays)
    return net, cfg, config_sha


def reconstruct(net: HybridNetwork, image: np.ndarray) -> np.ndarray:
    """Reconstruct one normalized zero-filled image; output clipped to [0, 1]."""
    pred = net.forward(np.asarray(image, dtype=np.float64)[None, None], train=False)
    return np.clip(pred[0, 0].astype(np.float64), 0.0, 1.0)


@dataclass
class MetricsReport:
    """Per-image and mean MSE / PSNR (dB) / SSIM for one model on one split."""

    model: str
    accel: float
    mse: list[float] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    def add(self, prediction: np.ndarray, target: np.ndarray) -> None:
        err = metrics.mse(prediction, target)
        self.mse.append(err)
        self.psnr.append(metrics.psnr_from_mse(err))
        self.ssim.append(metrics.ssim(prediction, target))

    @property
    def count(self) -> int:
        return len(self.mse)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))


@dataclass
class EvalResult:
    model: MetricsReport
    zero_filled: MetricsReport
    reconstructions: np.ndarray  # (N, H, W), clipped to [0, 1]


def evaluate(net: HybridNetwork, pairs: list[SamplePair], cfg: TrainConfig,
             model_tag: str | None = None) -> EvalResult:
    """Score a trained network and the zero-filled baseline on `pairs`.

    Metrics are computed on the normalized magnitude images (data range 1),
    predictions clipped to [0, 1].
    """
    if not pairs:
        raise ValueError("evaluation needs at least one sample pair")
    tag = model_tag or cfg.front_end
    if cfg.front_end == "quantum":
        feats = quanv_features([p.input for p in pairs], cfg.circuit_config())
        preds = net.forward_features(feats.astype(net.dtype), train=False)
    else:
        inputs = np.stack([p.input for p in pairs])[:, None].astype(net.dtype)
        preds = net.forward(inputs, train=False)
    preds = np.clip(preds[:, 0].astype(np.float64), 0.0, 1.0)
    if not np.all(np.isfinite(preds)):
        raise NumericError("network produced non-finite reconstruction values")

    model_report = MetricsReport(tag, cfg.accel)
    zf_report = MetricsReport("zero_filled", cfg.accel)
    for pred, pair in zip(preds, pairs):
        model_report.add(pred, pair.target)
        zf_report.add(pair.input, pair.target)
    return EvalResult(model_report, zf_report, preds)


@dataclass
class CompareResult:
    reports: dict[tuple[str, float], MetricsReport]
    table_path: Path
    out_dir: Path


def _fmt(value: float) -> str:
    return format(value, ".12g")


def _accel_tag(accel: float) -> str:
    return f"{accel:g}x"


def metrics_csv_text(reports: list[MetricsReport]) -> str:
    """Per-image metric rows plus a mean row per report, as CSV text."""
    rows = ["model,accel,slice,mse,psnr,ssim"]
    for report in reports:
        for i in range(report.count):
            rows.append(
                f"{report.model},{report.accel:g},{i},{_fmt(report.mse[i])},"
                f"{_fmt(report.psnr[i])},{_fmt(report.ssim[i])}"
            )
        rows.append(
            f"{report.model},{report.accel:g},mean,{_fmt(report.mean_mse)},"
            f"{_fmt(report.mean_psnr)},{_fmt(report.mean_ssim)}"
        )
    return "\n".join(rows) + "\n"


def compare(cfg: TrainConfig, out_dir, export_panels: int = 2) -> CompareResult:
    """Train and evaluate both front ends at each acceleration in cfg.accels.

    Both arms share seeds, masks, data, and schedule; only the front end
    differs. Writes `table1.csv` (rows MSE/PSNR/SSIM, one column per
    arm x acceleration), `metrics_full.csv` (per-image rows, zero-filled
    baseline included), per-arm loss histories and checkpoints, and
    Fig-2/3-style PGM panels for the first test slices.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    accels = cfg.accel_list()
    arms = ("classical", "quantum")
    arm_label = {"classical": "classical", "quantum": "hybrid"}

    reports: dict[tuple[str, float], MetricsReport] = {}
    recons: dict[tuple[str, float], np.ndarray] = {}
    test_sets: dict[float, list[SamplePair]] = {}
    for accel in accels:
        run_cfg = replace(cfg, accel=accel)
        train_pairs = prepare_dataset(run_cfg, "train")
        test_pairs = prepare_dataset(run_cfg, "test")
        test_sets[accel] = test_pairs
        for arm in arms:
            arm_cfg = replace(run_cfg, front_end=arm)
            arm_dir = out_dir / f"train_{arm_label[arm]}_{_accel_tag(accel)}"
            result = train(arm_cfg, arm_dir, pairs=train_pairs)
            evaluation = evaluate(result.network, test_pairs, arm_cfg, arm_label[arm])
            reports[(arm_label[arm], accel)] = evaluation.model
            recons[(arm_label[arm], accel)] = evaluation.reconstructions
            reports[("zero_filled", accel)] = evaluation.zero_filled

    # Table-1-shaped summary: metric rows, one column per arm and acceleration.
    columns = [(arm_label[arm], accel) for accel in accels for arm in arms]
    header = "metric," + ",".join(f"{arm}_{_accel_tag(accel)}" for arm, accel in columns)
    rows = [header]
    for metric_name, attr in (("MSE", "mean_mse"), ("PSNR", "mean_psnr"), ("SSIM", "mean_ssim")):
        cells = [_fmt(getattr(reports[col], attr)) for col in columns]
        rows.append(f"{metric_name}," + ",".join(cells))
    table_path = out_dir / "table1.csv"
    table_path.write_text("\n".join(rows) + "\n")

    ordered = [reports[key] for key in sorted(reports)]
    (out_dir / "metrics_full.csv").write_text(metrics_csv_text(ordered))

    for accel in accels:
        mask = run_mask(replace(cfg, accel=accel))
        tag = _accel_tag(accel)
        io.write_pgm(out_dir / f"{tag}_mask.pgm", mask.as_array())
        for i, pair in enumerate(test_sets[accel][:export_panels]):
            stem = f"{tag}_slice{i:02d}"
            io.write_pgm(out_dir / f"{stem}_ground_truth.pgm", pair.target)
            io.write_pgm(out_dir / f"{stem}_zero_filled.pgm", pair.input)
            for arm in ("classical", "hybrid"):
                recon = recons[(arm, accel)][i]
                io.write_pgm(out_dir / f"{stem}_recon_{arm}.pgm", recon)
                io.write_pgm(out_dir / f"{stem}_error_{arm}.pgm", np.abs(recon - pair.target))

    write_run_metadata(out_dir, config_to_text(cfg))
    return CompareResult(reports, table_path, out_dir)
