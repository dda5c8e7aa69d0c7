"""Super-resolution pretext training with optional conditional-adversarial loss."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .errors import BoundaryError, ContractError, DataQualityError, DomainError
from .geometry import GeoCoordinate, ScaleSpec
from .models import PAIR_SIDE, ModelBundle, init_params
from .raster import ElevationRaster, normalize_values, sample_offset_grid

logger = logging.getLogger(__name__)

DEFAULT_SCALES = (10.0, 30.0, 60.0)
CONVERGENCE_WINDOW = 100
CONVERGENCE_RTOL = 1e-4
CONVERGENCE_STREAK = 3


def lp_loss(pred: torch.Tensor, target: torch.Tensor, p: float = 1.0) -> torch.Tensor:
    """Mean over batch and pixels of |pred - target|^p."""
    if pred.shape != target.shape:
        raise ContractError(
            f"loss operands must share a shape, got {tuple(pred.shape)} "
            f"vs {tuple(target.shape)}")
    if p < 1:
        raise DomainError(f"norm order p must be >= 1, got {p}")
    return (pred - target).abs().pow(p).mean()


def _bce(probs: torch.Tensor, target: float) -> torch.Tensor:
    eps = torch.finfo(probs.dtype).eps
    probs = probs.clamp(eps, 1.0 - eps)
    if target == 1.0:
        return -torch.log(probs).mean()
    if target == 0.0:
        return -torch.log1p(-probs).mean()
    raise DomainError(f"BCE target must be 0 or 1, got {target}")


def pair_condition(x: torch.Tensor) -> torch.Tensor:
    """Resize 17x17 inputs to the discriminator's 64x64 pair side."""
    return F.interpolate(x, size=(PAIR_SIDE, PAIR_SIDE), mode="bilinear",
                         align_corners=False)


def generator_adv_loss(d, x_resized: torch.Tensor,
                       y_hat: torch.Tensor) -> torch.Tensor:
    """BCE of d([X, Y_hat]) against all-ones: the generator wants fakes read as real."""
    return _bce(d(torch.cat([x_resized, y_hat], dim=1)), 1.0)


def discriminator_adv_loss(d, x_resized: torch.Tensor, y_real: torch.Tensor,
                           y_hat: torch.Tensor) -> torch.Tensor:
    """BCE of real pairs vs ones plus fake pairs vs zeros (sum, not mean)."""
    real = _bce(d(torch.cat([x_resized, y_real], dim=1)), 1.0)
    fake = _bce(d(torch.cat([x_resized, y_hat.detach()], dim=1)), 0.0)
    return real + fake


@dataclass
class TrainConfig:
    locations: list[GeoCoordinate] = field(default_factory=list)
    scales: tuple[float, ...] = DEFAULT_SCALES
    k: int = 4
    lr_generator: float = 0.0002
    lr_discriminator: float = 0.0016
    lambda_rec: float = 1.0
    lambda_adv: float = 0.0
    p: float = 1.0
    batch_size: int = 16
    max_steps: int = 1000
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.lambda_rec < 0 or self.lambda_adv < 0:
            raise DomainError("loss weights must be non-negative")
        if self.lambda_rec == 0 and self.lambda_adv == 0:
            raise DomainError("at least one of lambda_rec/lambda_adv must be > 0")
        if self.p < 1:
            raise DomainError(f"norm order p must be >= 1, got {self.p}")
        if self.k < 1 or (self.k & (self.k - 1)) != 0:
            raise DomainError(f"fractal-factor k must be a power of 2, got {self.k}")
        if self.k == 1 and self.lambda_adv > 0:
            raise DomainError(
                "adversarial training needs k >= 4: a 16x16 reconstruction "
                "cannot fill a 2x64x64 discriminator pair")
        if self.lr_generator <= 0 or self.lr_discriminator <= 0:
            raise DomainError("learning rates must be positive")
        if self.batch_size < 1 or self.max_steps < 1:
            raise DomainError("batch_size and max_steps must be >= 1")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise DomainError("scales must be non-empty and positive")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")

    @property
    def adversarial(self) -> bool:
        return self.lambda_adv > 0


@dataclass
class StepRecord:
    step: int
    scale: float
    l_p: float
    l_g_adv: float | None
    l_d_adv: float | None


@dataclass
class TrainReport:
    records: list[StepRecord] = field(default_factory=list)
    wall_clock_s: float = 0.0
    converged: bool = False
    checkpoint_path: str | None = None

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "scale", "l_p", "l_g_adv", "l_d_adv"])
            for r in self.records:
                writer.writerow([
                    r.step, repr(float(r.scale)), repr(r.l_p),
                    "" if r.l_g_adv is None else repr(r.l_g_adv),
                    "" if r.l_d_adv is None else repr(r.l_d_adv),
                ])


def _target_offsets(scale: ScaleSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    # Cell-centered grid of 16k x 16k samples over the patch footprint
    # [-r, +r]: same ground square as the input, k x finer than its 16-cell
    # spacing, so the target carries detail the 17x17 input cannot.
    r = float(scale.radius_m)
    n = 16 * k
    cell = 2.0 * r / n
    east = -r + (np.arange(n) + 0.5) * cell
    north = r - (np.arange(n) + 0.5) * cell
    return east, north


def sample_training_pair(raster: ElevationRaster, center: GeoCoordinate,
                         scale: ScaleSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (x, y): normalized 17x17 input and 16k x 16k target at `center`."""
    offs = (np.arange(2 * scale.half_extent_px + 1) - scale.half_extent_px
            ) * scale.resolution
    x = sample_offset_grid(raster, center, offs, offs[::-1])
    east, north = _target_offsets(scale, k)
    y = sample_offset_grid(raster, center, east, north)
    return normalize_values(x), normalize_values(y)


def make_training_batch(raster: ElevationRaster, centers: list[GeoCoordinate],
                        scale: ScaleSpec, k: int):
    """Stack paired inputs/targets; silently drops out-of-raster centers.

    Returns (x: B x 1 x 17 x 17, y: B x 1 x 16k x 16k, kept, n_rejected).
    """
    xs, ys, kept = [], [], []
    rejected = 0
    for center in centers:
        try:
            x, y = sample_training_pair(raster, center, scale, k)
        except (BoundaryError, DataQualityError):
            rejected += 1
            continue
        xs.append(x)
        ys.append(y)
        kept.append(center)
    if not xs:
        return (torch.empty(0, 1, 17, 17), torch.empty(0, 1, 16 * k, 16 * k),
                kept, rejected)
    x_t = torch.as_tensor(np.stack(xs)[:, None, :, :], dtype=torch.float32)
    y_t = torch.as_tensor(np.stack(ys)[:, None, :, :], dtype=torch.float32)
    return x_t, y_t, kept, rejected


def _make_optimizer(params, kind: str, lr: float) -> torch.optim.Optimizer:
    if kind == "adam":
        return torch.optim.Adam(params, lr=lr, betas=(0.5, 0.999))
    return torch.optim.SGD(params, lr=lr, momentum=0.0)


class _ConvergenceTracker:
    """Stops when the 100-step moving average of the generator loss improves
    by less than 1e-4 relative over 3 consecutive windows."""

    def __init__(self, window: int = CONVERGENCE_WINDOW,
                 rtol: float = CONVERGENCE_RTOL,
                 streak_needed: int = CONVERGENCE_STREAK):
        self.window = window
        self.rtol = rtol
        self.streak_needed = streak_needed
        self._losses: list[float] = []
        self._prev_avg: float | None = None
        self._streak = 0

    def update(self, loss: float) -> bool:
        self._losses.append(loss)
        if len(self._losses) % self.window != 0:
            return False
        avg = float(np.mean(self._losses[-self.window:]))
        if self._prev_avg is not None:
            improvement = (self._prev_avg - avg) / max(abs(self._prev_avg), 1e-12)
            self._streak = self._streak + 1 if improvement < self.rtol else 0
        self._prev_avg = avg
        return self._streak >= self.streak_needed


def train_model(config: TrainConfig,
                raster: ElevationRaster) -> tuple[ModelBundle, TrainReport]:
    """Alternating updates: (f, g) descend lambda_rec*L_p + lambda_adv*L_G,
    then d descends its real/fake BCE — skipped entirely when lambda_adv = 0."""
    if not config.locations:
        raise DomainError("training needs at least one location")

    torch.manual_seed(config.seed)
    bundle = init_params(config.seed, config.k, scales=list(config.scales))
    bundle.f.train(), bundle.g.train()
    gen_opt = _make_optimizer(
        list(bundle.f.parameters()) + list(bundle.g.parameters()),
        config.optimizer, config.lr_generator)
    d_opt = None
    if config.adversarial:
        bundle.d.train()
        d_opt = _make_optimizer(bundle.d.parameters(), config.optimizer,
                                config.lr_discriminator)

    rng = np.random.default_rng(config.seed)
    scale_specs = [ScaleSpec.from_resolution(s) for s in config.scales]
    report = TrainReport()
    tracker = _ConvergenceTracker()
    started = time.perf_counter()
    step = 0
    total_rejected = 0

    while step < config.max_steps and not report.converged:
        order = rng.permutation(len(config.locations))
        for lo in range(0, len(order), config.batch_size):
            batch = [config.locations[i] for i in order[lo:lo + config.batch_size]]
            for scale in scale_specs:
                if step >= config.max_steps or report.converged:
                    break
                x, y, kept, rejected = make_training_batch(
                    raster, batch, scale, config.k)
                total_rejected += rejected
                if not kept:
                    continue

                y_hat = bundle.g(bundle.f(x))
                l_p = lp_loss(y_hat, y, config.p)
                l_g = None
                gen_loss = config.lambda_rec * l_p
                x64 = None
                if config.adversarial:
                    x64 = pair_condition(x)
                    l_g = generator_adv_loss(bundle.d, x64, y_hat)
                    gen_loss = gen_loss + config.lambda_adv * l_g
                if not torch.isfinite(gen_loss):
                    raise DataQualityError(
                        f"non-finite generator loss at step {step} "
                        f"(scale {scale.resolution} m/px, batch of {len(kept)} "
                        f"near {kept[0]})")
                gen_opt.zero_grad(set_to_none=True)
                gen_loss.backward()
                gen_opt.step()

                l_d = None
                if config.adversarial:
                    l_d = discriminator_adv_loss(bundle.d, x64.detach(), y,
                                                 y_hat.detach())
                    if not torch.isfinite(l_d):
                        raise DataQualityError(
                            f"non-finite discriminator loss at step {step} "
                            f"(scale {scale.resolution} m/px)")
                    d_opt.zero_grad(set_to_none=True)
                    l_d.backward()
                    d_opt.step()

                report.records.append(StepRecord(
                    step=step, scale=float(scale.resolution),
                    l_p=float(l_p.detach()),
                    l_g_adv=None if l_g is None else float(l_g.detach()),
                    l_d_adv=None if l_d is None else float(l_d.detach())))
                report.converged = tracker.update(float(gen_loss.detach()))
                step += 1
        if not report.records:
            raise DomainError("every training location fell outside the raster")

    if total_rejected:
        logger.warning("dropped %d out-of-raster location/scale samples "
                       "during training", total_rejected)
    report.wall_clock_s = time.perf_counter() - started
    bundle.step = step
    bundle.eval()
    return bundle, report
