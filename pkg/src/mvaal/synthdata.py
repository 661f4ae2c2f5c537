"""Procedural paired-modality image datasets with masks and class labels.

m1 carries class-specific shape textures; m2 is a dilated/smoothed rendering
of the same scene's extent, informative about where things are but stripped
of the texture that identifies the class.
"""

from __future__ import annotations

import hashlib
import json
import os
import zlib
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import tensor as T
from .tensor import Tensor

MANIFEST_VERSION = 1

SHAPE_FAMILIES = ("disk", "ring", "box", "cross")


class DatasetError(ValueError):
    pass


@dataclass
class ModalityLink:
    dilation: int = 2
    blur_radius: int = 1
    curve_gamma: float = 0.7
    curve_scale: float = 0.85


def default_class_profile():
    # the rare family creates the diversity-sampling opportunity
    return [
        (0, 0.35, {"family": "disk"}),
        (1, 0.30, {"family": "ring"}),
        (2, 0.30, {"family": "box"}),
        (3, 0.05, {"family": "cross"}),
    ]


@dataclass
class SynthSpec:
    image_size: int = 32
    n_samples: int = 1000
    class_profile: list = field(default_factory=default_class_profile)
    modality_link: ModalityLink = field(default_factory=ModalityLink)
    noise_sigma: float = 0.05
    seed: int = 0
    min_foreground: int = 16
    secondary_prob: float = 0.3

    def __post_init__(self):
        if isinstance(self.modality_link, dict):
            self.modality_link = ModalityLink(**self.modality_link)
        weights = [w for _, w, _ in self.class_profile]
        if any(w <= 0 for w in weights):
            raise DatasetError("class frequency weights must be positive")

    def weights(self):
        w = np.array([w for _, w, _ in self.class_profile], dtype=float)
        return w / w.sum()

    @property
    def num_classes(self):
        return len(self.class_profile)

    def to_json(self):
        d = dict(self.__dict__)
        d["modality_link"] = dict(self.modality_link.__dict__)
        d["class_profile"] = [list(p) for p in self.class_profile]
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d["class_profile"] = [tuple(p) for p in d["class_profile"]]
        return cls(**d)


@dataclass
class Shape:
    family: str
    cx: float
    cy: float
    r: float
    intensity: float
    phase: int = 0  # texture offset, randomized per sample


@dataclass
class Scene:
    id: int
    primary_class: int
    shapes: list  # of (class_id, Shape)
    noise_seed: int


@dataclass
class Sample:
    id: int
    m1: np.ndarray    # [1,H,W]
    m2: np.ndarray
    mask: np.ndarray  # [1,H,W] binary
    labels: set       # class ids present
    primary: int


# -- shape rasterization ---------------------------------------------------------


def _grid(size):
    y, x = np.mgrid[0:size, 0:size]
    return x.astype(float), y.astype(float)


def shape_support(shape: Shape, size: int) -> np.ndarray:
    x, y = _grid(size)
    dx, dy = x - shape.cx, y - shape.cy
    d2 = dx * dx + dy * dy
    r = shape.r
    if shape.family == "disk":
        return d2 <= r * r
    if shape.family == "ring":
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    if shape.family == "box":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if shape.family == "cross":
        arm = max(1.0, r / 3.0)
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | \
            ((np.abs(dy) <= arm) & (np.abs(dx) <= r))
    raise DatasetError(f"unknown shape family: {shape.family}")


def shape_texture(shape: Shape, size: int) -> np.ndarray:
    x, y = _grid(size)
    dx, dy = x - shape.cx, y - shape.cy
    d = np.sqrt(dx * dx + dy * dy)
    a = shape.intensity
    if shape.family == "disk":
        return a * (1.0 - 0.5 * np.clip(d / max(shape.r, 1e-6), 0, 1))
    if shape.family == "ring":
        ang = np.arctan2(dy, dx)
        return a * (0.75 + 0.25 * np.cos(3 * ang))
    if shape.family == "box":
        checker = ((x.astype(int) + y.astype(int) + shape.phase) % 2).astype(float)
        return a * (0.55 + 0.35 * checker)
    if shape.family == "cross":
        return a * (0.9 - 0.2 * np.clip(d / max(shape.r, 1e-6), 0, 1))
    raise DatasetError(f"unknown shape family: {shape.family}")


def _dilate(mask: np.ndarray, steps: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(steps):
        grown = out.copy()
        grown[1:] |= out[:-1]
        grown[:-1] |= out[1:]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


def _box_blur(img: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return img
    k = 2 * radius + 1
    pad = np.pad(img, radius, mode="edge")
    out = np.zeros_like(img)
    for i in range(k):
        for j in range(k):
            out += pad[i:i + img.shape[0], j:j + img.shape[1]]
    return out / (k * k)


def render_sample(scene: Scene, spec: SynthSpec) -> Sample:
    """Rasterize a scene to (m1, m2, mask, labels)."""
    size = spec.image_size
    m1 = np.zeros((size, size))
    mask = np.zeros((size, size), dtype=bool)
    for _, shape in scene.shapes:
        sup = shape_support(shape, size)
        tex = shape_texture(shape, size)
        m1 = np.where(sup, np.maximum(m1, tex), m1)
        mask |= sup

    link = spec.modality_link
    extent = _dilate(mask, link.dilation).astype(float)
    smooth = _box_blur(extent, link.blur_radius)
    m2 = link.curve_scale * np.power(np.clip(smooth, 0, 1), link.curve_gamma)

    rng = np.random.default_rng(scene.noise_seed)
    if spec.noise_sigma > 0:
        m1 = m1 + rng.normal(0, spec.noise_sigma, size=m1.shape)
        m2 = m2 + rng.normal(0, spec.noise_sigma, size=m2.shape)
    m1 = np.clip(m1, 0, 1)
    m2 = np.clip(m2, 0, 1)

    labels = {cid for cid, _ in scene.shapes}
    return Sample(id=scene.id, m1=m1[None], m2=m2[None], mask=mask[None].astype(float),
                  labels=labels, primary=scene.primary_class)


def _sample_scene(spec: SynthSpec, sample_id: int) -> Scene:
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(sample_id)]))
    size = spec.image_size
    weights = spec.weights()
    class_ids = [cid for cid, _, _ in spec.class_profile]
    families = {cid: p.get("family", SHAPE_FAMILIES[cid % 4])
                for cid, _, p in spec.class_profile}

    for _ in range(64):
        primary = int(rng.choice(class_ids, p=weights))
        r = rng.uniform(size * 0.12, size * 0.26)
        cx = rng.uniform(size * 0.3, size * 0.7)
        cy = rng.uniform(size * 0.3, size * 0.7)
        inten = rng.uniform(0.45, 1.0)
        phase = int(rng.integers(2))
        shapes = [(primary, Shape(families[primary], cx, cy, r, inten, phase))]
        if rng.uniform() < spec.secondary_prob:
            others = [c for c in class_ids if c != primary]
            sec = int(rng.choice(others))
            r2 = rng.uniform(size * 0.08, size * 0.14)
            cx2 = rng.uniform(size * 0.15, size * 0.85)
            cy2 = rng.uniform(size * 0.15, size * 0.85)
            shapes.append((sec, Shape(families[sec], cx2, cy2, r2,
                                      rng.uniform(0.45, 0.9), int(rng.integers(2)))))
        noise_seed = int(rng.integers(2 ** 31))
        scene = Scene(id=sample_id, primary_class=primary, shapes=shapes, noise_seed=noise_seed)
        sample = render_sample(scene, spec)
        if sample.mask.sum() >= spec.min_foreground:
            return scene
    raise DatasetError(
        f"could not satisfy the {spec.min_foreground}-pixel foreground floor for sample {sample_id}")


# -- dataset container --------------------------------------------------------------


class DatasetView:
    """Materialized slice of a dataset split."""

    def __init__(self, dataset, indices):
        self.indices = np.asarray(indices)
        self.n = len(self.indices)
        self.m1 = dataset.m1[self.indices]
        self.m2 = dataset.m2[self.indices]
        self.masks = dataset.masks[self.indices]
        self.multilabels = dataset.multilabels[self.indices]
        self.classes = dataset.classes[self.indices]


@dataclass
class Dataset:
    spec: SynthSpec
    m1: np.ndarray
    m2: np.ndarray
    masks: np.ndarray
    multilabels: np.ndarray
    classes: np.ndarray
    splits: dict

    @property
    def n(self):
        return self.m1.shape[0]

    def view(self, split) -> DatasetView:
        return DatasetView(self, self.splits[split])

    def subset(self, indices) -> DatasetView:
        return DatasetView(self, indices)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.m1, self.m2, self.masks, self.multilabels, self.classes):
            h.update(np.ascontiguousarray(arr).tobytes())
        for split in sorted(self.splits):
            h.update(split.encode())
            h.update(np.asarray(self.splits[split], dtype=np.int64).tobytes())
        return h.hexdigest()


def generate_dataset(spec: SynthSpec) -> Dataset:
    """Render n_samples scenes and split 80:20 train/test, then 80:20 train/val."""
    if spec.n_samples < 10:
        raise DatasetError("need at least 10 samples")
    n = spec.n_samples
    c = spec.num_classes
    size = spec.image_size
    m1 = np.zeros((n, 1, size, size))
    m2 = np.zeros((n, 1, size, size))
    masks = np.zeros((n, 1, size, size))
    multilabels = np.zeros((n, c))
    classes = np.zeros(n, dtype=np.int64)
    for i in range(n):
        sample = render_sample(_sample_scene(spec, i), spec)
        m1[i], m2[i], masks[i] = sample.m1, sample.m2, sample.mask
        classes[i] = sample.primary
        for cid in sample.labels:
            multilabels[i, cid] = 1.0

    split_rng = np.random.default_rng(
        np.random.SeedSequence([int(spec.seed), zlib.crc32(b"splits")]))
    order = split_rng.permutation(n)
    n_train_all = int(n * 0.8)
    n_train = int(n_train_all * 0.8)
    splits = {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train:n_train_all]),
        "test": np.sort(order[n_train_all:]),
    }
    return Dataset(spec=spec, m1=m1, m2=m2, masks=masks,
                   multilabels=multilabels, classes=classes, splits=splits)


# -- persistence ----------------------------------------------------------------------


def save_dataset(dataset: Dataset, outdir):
    os.makedirs(outdir, exist_ok=True)
    blobs = {"m1": dataset.m1, "m2": dataset.m2, "masks": dataset.masks,
             "multilabels": dataset.multilabels}
    for name, arr in blobs.items():
        T.save_tensor(Tensor(arr), os.path.join(outdir, f"{name}.bin"))
    T.save_tensor(Tensor(dataset.classes.astype(float)), os.path.join(outdir, "classes.bin"))
    for split, idx in dataset.splits.items():
        with open(os.path.join(outdir, f"split_{split}.json"), "w") as fh:
            json.dump([int(i) for i in idx], fh)
    manifest = {
        "version": MANIFEST_VERSION,
        "spec": dataset.spec.to_json(),
        "splits": sorted(dataset.splits),
        "content_hash": dataset.content_hash(),
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_dataset(indir) -> Dataset:
    with open(os.path.join(indir, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"unsupported dataset manifest version: {manifest.get('version')}")

    def blob(name):
        path = os.path.join(indir, f"{name}.bin")
        if not os.path.exists(path):
            raise DatasetError(f"missing dataset blob: {name}.bin")
        return T.load_tensor(path).data

    splits = {}
    for split in manifest["splits"]:
        path = os.path.join(indir, f"split_{split}.json")
        if not os.path.exists(path):
            raise DatasetError(f"missing split index file: split_{split}.json")
        with open(path) as fh:
            splits[split] = np.asarray(json.load(fh), dtype=np.int64)
    dataset = Dataset(
        spec=SynthSpec.from_json(manifest["spec"]),
        m1=blob("m1"), m2=blob("m2"), masks=blob("masks"),
        multilabels=blob("multilabels"),
        classes=blob("classes").astype(np.int64),
        splits=splits,
    )
    if dataset.content_hash() != manifest["content_hash"]:
        raise DatasetError("dataset content hash mismatch (corrupted or tampered blobs)")
    return dataset


def export_png(dataset: Dataset, index: int, path, modality="m1"):
    """8-bit grayscale PNG of one sample image."""
    arr = getattr(dataset, modality)[index, 0]
    img = Image.fromarray(np.round(arr * 255).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def png_bytes(arr: np.ndarray) -> bytes:
    import io
    img = Image.fromarray(np.round(arr * 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
