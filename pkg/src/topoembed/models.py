"""Patch encoder, super-resolution decoder, and pair discriminator."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ContractError, DataQualityError, DomainError

ARCH_VERSION = "enc17-dechalf-v1"
EMBEDDING_DIM = 128
PATCH_SIDE = 17
PAIR_SIDE = 64
NORMALIZATION = "minmax01"


def _require_batch(t: torch.Tensor, inner: tuple[int, ...], name: str) -> None:
    if t.ndim != len(inner) + 1 or tuple(t.shape[1:]) != inner:
        want = "(B, " + ", ".join(map(str, inner)) + ")"
        raise ContractError(f"{name} expects {want}, got {tuple(t.shape)}")


def _conv_block(in_ch: int, out_ch: int, shrink: bool = False) -> list[nn.Module]:
    # 3x3 conv + BN + ReLU. `shrink` pads only the top/left edge so the
    # spatial side drops by one (17 -> 16); all other blocks preserve size.
    pad: list[nn.Module] = [nn.ZeroPad2d((1, 0, 1, 0))] if shrink else []
    conv = nn.Conv2d(in_ch, out_ch, 3, padding=0 if shrink else 1)
    return pad + [conv, nn.BatchNorm2d(out_ch), nn.ReLU(inplace=True)]


class Encoder(nn.Module):
    """1x17x17 normalized patch -> 128-d embedding."""

    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(*_conv_block(1, 8, shrink=True),
                                  *_conv_block(8, 8))
        stages = []
        ch = 8
        for out_ch in (16, 32, 64, 128):
            stages.append(nn.Sequential(nn.MaxPool2d(2),
                                        *_conv_block(ch, out_ch),
                                        *_conv_block(out_ch, out_ch)))
            ch = out_ch
        self.down = nn.Sequential(*stages)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _require_batch(x, (1, PATCH_SIDE, PATCH_SIDE), "encoder")
        return self.down(self.stem(x)).flatten(1)


class Decoder(nn.Module):
    """128-d embedding -> 1 x (16k) x (16k) reconstruction at k x the input detail."""

    def __init__(self, k: int = 1):
        super().__init__()
        if k < 1 or (k & (k - 1)) != 0:
            raise DomainError(f"fractal-factor k must be a power of 2 >= 1, got {k}")
        self.k = k
        layers: list[nn.Module] = []
        ch = EMBEDDING_DIM
        for _ in range(4 + int(math.log2(k))):
            out_ch = max(ch // 2, 1)
            layers.append(nn.Upsample(scale_factor=2, mode="bilinear",
                                      align_corners=False))
            layers += _conv_block(ch, out_ch) + _conv_block(out_ch, out_ch)
            ch = out_ch
        self.up = nn.Sequential(*layers)
        # Plain conv head: reconstructions must cover [0, 1] without a BN/ReLU
        # squashing half the range.
        self.head = nn.Conv2d(ch, 1, 3, padding=1)

    @property
    def out_side(self) -> int:
        return 16 * self.k

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 2 or z.shape[1] != EMBEDDING_DIM:
            raise ContractError(
                f"decoder expects (B, {EMBEDDING_DIM}), got {tuple(z.shape)}")
        h = z.reshape(z.shape[0], EMBEDDING_DIM, 1, 1)
        return self.head(self.up(h))


class Discriminator(nn.Module):
    """2x64x64 (condition, candidate) pair -> probability the pair is real."""

    def __init__(self):
        super().__init__()
        layers: list[nn.Module] = []
        ch = 2
        for out_ch in (8, 16, 32, 64):
            layers += [nn.Conv2d(ch, out_ch, 4, stride=2, padding=1),
                       nn.BatchNorm2d(out_ch), nn.ReLU(inplace=True)]
            ch = out_ch
        layers += [nn.Conv2d(ch, 128, 4, stride=1, padding=0),
                   nn.BatchNorm2d(128), nn.ReLU(inplace=True)]
        self.features = nn.Sequential(*layers)
        self.classifier = nn.Sequential(nn.Linear(128, 64), nn.ReLU(inplace=True),
                                        nn.Linear(64, 32), nn.ReLU(inplace=True),
                                        nn.Linear(32, 1))

    def forward(self, pair: torch.Tensor) -> torch.Tensor:
        _require_batch(pair, (2, PAIR_SIDE, PAIR_SIDE), "discriminator")
        logit = self.classifier(self.features(pair).flatten(1)).squeeze(1)
        p = torch.sigmoid(logit)
        # keep the output strictly inside (0, 1) even where sigmoid saturates
        eps = torch.finfo(p.dtype).eps
        return p.clamp(eps, 1.0 - eps)


def _deterministic_init_(net: nn.Module, gen: torch.Generator) -> None:
    # fan-in-scaled uniform weights, zero biases, BatchNorm at identity
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
        elif isinstance(m, nn.Linear):
            fan_in = m.in_features
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.running_mean.zero_()
                m.running_var.fill_(1.0)
                m.num_batches_tracked.zero_()
            continue
        else:
            continue
        bound = 1.0 / math.sqrt(fan_in)
        with torch.no_grad():
            m.weight.uniform_(-bound, bound, generator=gen)
            if m.bias is not None:
                m.bias.zero_()


@dataclass
class ModelBundle:
    """Encoder/decoder/discriminator plus the metadata needed to reuse them."""

    f: Encoder
    g: Decoder
    d: Discriminator
    k: int
    scales: list[float] = field(default_factory=list)
    seed: int = 0
    arch_version: str = ARCH_VERSION
    step: int = 0

    def __post_init__(self):
        if self.g.k != self.k:
            raise ContractError(
                f"decoder built for k={self.g.k} but bundle declares k={self.k}")

    @property
    def out_side(self) -> int:
        return 16 * self.k

    def eval(self) -> "ModelBundle":
        self.f.eval(), self.g.eval(), self.d.eval()
        return self

    def train(self) -> "ModelBundle":
        self.f.train(), self.g.train(), self.d.train()
        return self


def init_params(seed: int, k: int, scales: list[float] | None = None) -> ModelBundle:
    gen = torch.Generator().manual_seed(int(seed))
    f, g, d = Encoder(), Decoder(k), Discriminator()
    for net in (f, g, d):
        _deterministic_init_(net, gen)
    bundle = ModelBundle(f, g, d, k=k, scales=list(scales or []), seed=int(seed))
    return bundle.eval()


def _to_batch(values, inner: tuple[int, ...], name: str,
              dtype: torch.dtype) -> tuple[torch.Tensor, bool]:
    arr = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if arr.ndim == len(inner) - 1 and inner[0] == 1:
        arr = arr[None, ...]
    single = arr.ndim == len(inner)
    if single:
        arr = arr[None, ...]
    if arr.ndim != len(inner) + 1 or arr.shape[1:] != inner:
        raise ContractError(f"{name} expects shape {inner} (or a batch of them), "
                            f"got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError(f"{name} input contains non-finite values")
    return torch.as_tensor(arr, dtype=dtype), single


def _inference(net: nn.Module, t: torch.Tensor) -> torch.Tensor:
    was_training = net.training
    net.eval()
    try:
        with torch.no_grad():
            return net(t)
    finally:
        net.train(was_training)


def encode(f: Encoder, patch) -> np.ndarray:
    """Embed one 17x17 patch (or a batch) into 128-d vectors."""
    dtype = next(f.parameters()).dtype
    t, single = _to_batch(patch, (1, PATCH_SIDE, PATCH_SIDE), "encode", dtype)
    out = _inference(f, t).numpy()
    return out[0] if single else out


def decode(g: Decoder, z, k: int | None = None) -> np.ndarray:
    """Reconstruct a 16k x 16k image from a 128-d embedding (or a batch)."""
    if k is not None and k != g.k:
        raise ContractError(f"decoder was built for k={g.k}, asked for k={k}")
    arr = np.asarray(z, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != EMBEDDING_DIM:
        raise ContractError(f"decode expects {EMBEDDING_DIM}-vectors, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError("decode input contains non-finite values")
    dtype = next(g.parameters()).dtype
    out = _inference(g, torch.as_tensor(arr, dtype=dtype)).numpy()
    return out[0] if single else out


def discriminate(d: Discriminator, pair) -> float | np.ndarray:
    """Score one 2x64x64 pair (or a batch): probability the pair is real."""
    dtype = next(d.parameters()).dtype
    t, single = _to_batch(pair, (2, PAIR_SIDE, PAIR_SIDE), "discriminate", dtype)
    out = _inference(d, t).numpy()
    return float(out[0]) if single else out


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def manifest_path(checkpoint_path) -> Path:
    p = Path(checkpoint_path)
    return p.with_name(p.name + ".json")


def save_checkpoint(path, bundle: ModelBundle) -> dict:
    """Write the parameter blob plus a sidecar JSON manifest; returns the manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"f": bundle.f.state_dict(), "g": bundle.g.state_dict(),
                "d": bundle.d.state_dict()}, path)
    manifest = {
        "kind": "terrain-embedding",
        "arch_version": bundle.arch_version,
        "k": bundle.k,
        "scales": [float(s) for s in bundle.scales],
        "seed": bundle.seed,
        "normalization": NORMALIZATION,
        "step": bundle.step,
        "checkpoint_hash": file_sha256(path),
    }
    _atomic_write_text(manifest_path(path), json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_manifest(path) -> dict:
    mpath = manifest_path(path)
    if not mpath.exists():
        raise ContractError(f"missing checkpoint manifest {mpath}")
    return json.loads(mpath.read_text())


def load_checkpoint(path) -> ModelBundle:
    path = Path(path)
    manifest = load_manifest(path)
    if manifest.get("kind") != "terrain-embedding":
        raise ContractError(
            f"checkpoint kind {manifest.get('kind')!r} is not a terrain-embedding")
    if manifest.get("arch_version") != ARCH_VERSION:
        raise ContractError(
            f"checkpoint arch_version {manifest.get('arch_version')!r} does not "
            f"match this build ({ARCH_VERSION!r})")
    if manifest.get("checkpoint_hash") != file_sha256(path):
        raise DataQualityError(f"checkpoint {path} does not match its manifest hash")
    blob = torch.load(path, map_location="cpu", weights_only=True)
    bundle = ModelBundle(Encoder(), Decoder(int(manifest["k"])), Discriminator(),
                         k=int(manifest["k"]),
                         scales=[float(s) for s in manifest.get("scales", [])],
                         seed=int(manifest.get("seed", 0)),
                         arch_version=manifest["arch_version"],
                         step=int(manifest.get("step", 0)))
    try:
        bundle.f.load_state_dict(blob["f"])
        bundle.g.load_state_dict(blob["g"])
        bundle.d.load_state_dict(blob["d"])
    except (KeyError, RuntimeError) as e:
        raise ContractError(f"checkpoint parameters do not fit the architecture: {e}")
    return bundle.eval()
