"""Reference embedders: raw-pixel flatten and a small supervised CNN."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .errors import CapacityError, ContractError, DomainError
from .geometry import ScaleSpec
from .labels import LabeledCoordSet, to_image_dataset
from .models import (
    Encoder,
    _atomic_write_text,
    _deterministic_init_,
    _to_batch,
    file_sha256,
    manifest_path,
)
from .raster import ElevationRaster

ID_DIM = 17 * 17
CNN_EMBED_DIM = 64
CNN_ARCH_VERSION = "cnn2conv2fc-v1"


@dataclass
class EmbeddingModelHandle:
    """Uniform wrapper so every embedder exposes embed(patches) -> vectors."""

    kind: str
    output_dim: int
    embed_fn: Callable[[torch.Tensor], np.ndarray]
    classes: tuple[str, ...] = ()

    def embed(self, patches) -> np.ndarray:
        t, single = _to_batch(patches, (1, 17, 17), f"{self.kind} embed",
                              torch.float32)
        out = np.asarray(self.embed_fn(t))
        if out.shape != (t.shape[0], self.output_dim):
            raise ContractError(
                f"{self.kind} embedder returned {out.shape}, expected "
                f"({t.shape[0]}, {self.output_dim})")
        return out[0] if single else out


def id_embed(patch) -> np.ndarray:
    """Row-major flatten of the 17x17 patch; lossless."""
    t, single = _to_batch(patch, (1, 17, 17), "id_embed", torch.float64)
    flat = t.numpy().reshape(t.shape[0], ID_DIM)
    return flat[0] if single else flat


def id_handle() -> EmbeddingModelHandle:
    return EmbeddingModelHandle(
        "id", ID_DIM,
        lambda t: t.numpy().reshape(t.shape[0], ID_DIM).astype(np.float64))


def encoder_handle(f: Encoder) -> EmbeddingModelHandle:
    def fn(t: torch.Tensor) -> np.ndarray:
        was_training = f.training
        f.eval()
        try:
            with torch.no_grad():
                return f(t).numpy()
        finally:
            f.train(was_training)

    return EmbeddingModelHandle("encoder", 128, fn)


class PatchCNN(nn.Module):
    """Two conv + two FC supervised classifier; the hidden FC is the embedding."""

    def __init__(self, n_heads: int = 4):
        super().__init__()
        if n_heads < 1:
            raise DomainError(f"need at least one head, got {n_heads}")
        self.n_heads = n_heads
        self.features = nn.Sequential(
            nn.Conv2d(1, 8, 3, padding=1), nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(8, 16, 3, padding=1), nn.ReLU(inplace=True),
            nn.MaxPool2d(2))
        self.hidden = nn.Linear(16 * 4 * 4, CNN_EMBED_DIM)
        self.heads = nn.Linear(CNN_EMBED_DIM, n_heads)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or tuple(x.shape[1:]) != (1, 17, 17):
            raise ContractError(f"patch CNN expects (B, 1, 17, 17), "
                                f"got {tuple(x.shape)}")
        h = self.features(x).flatten(1)
        return torch.relu(self.hidden(h))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.heads(self.embed(x))


def cnn_handle(model: PatchCNN,
               classes: tuple[str, ...] = ()) -> EmbeddingModelHandle:
    def fn(t: torch.Tensor) -> np.ndarray:
        was_training = model.training
        model.eval()
        try:
            with torch.no_grad():
                return model.embed(t).numpy()
        finally:
            model.train(was_training)

    return EmbeddingModelHandle("cnn", CNN_EMBED_DIM, fn, classes=classes)


def fit_patch_cnn(x: np.ndarray, y: np.ndarray, seed: int = 0,
                  epochs: int = 30, lr: float = 1e-3,
                  batch_size: int = 64) -> PatchCNN:
    """Deterministically train a PatchCNN on (B,1,17,17) inputs and (B,H)
    multilabel targets with per-head sigmoid BCE."""
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.float32)
    if x.ndim != 4 or x.shape[1:] != (1, 17, 17) or y.ndim != 2 \
            or len(x) != len(y):
        raise ContractError(f"bad training arrays: x {x.shape}, y {y.shape}")
    if len(x) == 0:
        raise CapacityError("no training samples")
    torch.manual_seed(seed)
    model = PatchCNN(n_heads=y.shape[1])
    _deterministic_init_(model, torch.Generator().manual_seed(seed))
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    bce = nn.BCEWithLogitsLoss()
    rng = np.random.default_rng(seed)
    x_t = torch.from_numpy(x)
    y_t = torch.from_numpy(y)
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for lo in range(0, len(order), batch_size):
            idx = torch.from_numpy(order[lo:lo + batch_size])
            opt.zero_grad(set_to_none=True)
            loss = bce(model(x_t[idx]), y_t[idx])
            loss.backward()
            opt.step()
    return model.eval()


def _merge_class_datasets(datasets: dict[str, LabeledCoordSet],
                          scale: ScaleSpec, raster: ElevationRaster):
    classes = tuple(sorted(datasets))
    xs, ys = [], []
    for ci, name in enumerate(classes):
        pairs, _ = to_image_dataset(datasets[name], scale, raster)
        if not pairs:
            raise CapacityError(f"class {name!r} has no usable samples "
                                f"inside the raster")
        for patch, label in pairs:
            xs.append(patch.values[None, :, :])
            target = np.zeros(len(classes), dtype=np.float32)
            target[ci] = float(label)
            ys.append(target)
    return np.stack(xs), np.stack(ys), classes


def train_supervised_cnn(datasets: dict[str, LabeledCoordSet],
                         raster: ElevationRaster, scale: ScaleSpec,
                         seed: int = 0, epochs: int = 30,
                         lr: float = 1e-3) -> EmbeddingModelHandle:
    """Fit the multilabel CNN on merged class datasets; embedding = hidden FC."""
    if not datasets:
        raise CapacityError("no class datasets supplied")
    x, y, classes = _merge_class_datasets(datasets, scale, raster)
    model = fit_patch_cnn(x, y, seed=seed, epochs=epochs, lr=lr)
    return cnn_handle(model, classes=classes)


def training_accuracy(handle: EmbeddingModelHandle, model: PatchCNN,
                      x: np.ndarray, y: np.ndarray) -> float:
    with torch.no_grad():
        logits = model(torch.from_numpy(np.asarray(x, dtype=np.float32)))
    pred = (logits.numpy() > 0).astype(np.float32)
    return float((pred == np.asarray(y, dtype=np.float32)).mean())


def save_cnn_checkpoint(path, model: PatchCNN,
                        classes: tuple[str, ...] = (), seed: int = 0,
                        scales: list[float] | None = None) -> dict:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"cnn": model.state_dict(), "n_heads": model.n_heads}, path)
    manifest = {
        "kind": "supervised-cnn",
        "arch_version": CNN_ARCH_VERSION,
        "classes": list(classes),
        "seed": seed,
        "scales": [float(s) for s in (scales or [])],
        "normalization": "minmax01",
        "checkpoint_hash": file_sha256(path),
    }
    _atomic_write_text(manifest_path(path), json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_cnn_checkpoint(path) -> EmbeddingModelHandle:
    path = Path(path)
    mpath = manifest_path(path)
    if not mpath.exists():
        raise ContractError(f"missing checkpoint manifest {mpath}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("kind") != "supervised-cnn":
        raise ContractError(f"checkpoint kind {manifest.get('kind')!r} is not "
                            f"a supervised-cnn")
    if manifest.get("arch_version") != CNN_ARCH_VERSION:
        raise ContractError(
            f"checkpoint arch_version {manifest.get('arch_version')!r} does "
            f"not match this build ({CNN_ARCH_VERSION!r})")
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = PatchCNN(n_heads=int(blob["n_heads"]))
    model.load_state_dict(blob["cnn"])
    model.eval()
    return cnn_handle(model, classes=tuple(manifest.get("classes", [])))
