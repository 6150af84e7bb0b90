"""Task streams: a labelled source domain followed by unlabelled target domains.

Synthetic generators (rotated two-moons, shifted Gaussian blobs) are the
main substrate; IDX files (MNIST/USPS-style) can be loaded for small real
runs. Target training splits never carry labels; every domain has a labelled
test split used only for evaluation.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .exceptions import ParseError, ShapeError, ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Domain:
    name: str
    inputs: np.ndarray
    labels: np.ndarray | None = None
    split: str = "train"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.inputs.shape[0],):
                raise ShapeError(f"{self.name}: {self.labels.shape[0]} labels for {self.inputs.shape[0]} inputs")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def unlabeled(self) -> "Domain":
        return replace(self, labels=None)


@dataclass
class TaskStream:
    """``source`` is labelled; ``targets`` are unlabelled; ``tests[i]`` evaluates domain ``i``
    (index 0 is the source)."""

    source: Domain
    targets: list[Domain]
    tests: list[Domain]
    k: int

    def __post_init__(self):
        if len(self.tests) != 1 + len(self.targets):
            raise ValidationError("need one test split per domain")
        if self.source.labels is None:
            raise ValidationError("source domain must be labelled")
        for dom in [self.source, *self.targets, *self.tests]:
            if dom.dim != self.source.dim:
                raise ValidationError(f"domain {dom.name} has d={dom.dim}, expected {self.source.dim}")
            if dom.labels is not None and dom.labels.size and (dom.labels.min() < 0 or dom.labels.max() >= self.k):
                raise ValidationError(f"domain {dom.name} has labels outside [0, {self.k})")
        for dom in self.targets:
            if dom.labels is not None:
                raise ValidationError(f"target training split {dom.name} must not carry labels")

    @property
    def n_domains(self) -> int:
        return 1 + len(self.targets)

    @property
    def names(self) -> list[str]:
        return [self.source.name] + [t.name for t in self.targets]


def _rotation(deg: float) -> np.ndarray:
    deg = float(deg) % 360.0
    exact = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if deg in exact:
        c, s = exact[deg]
    else:
        r = np.deg2rad(deg)
        c, s = np.cos(r), np.sin(r)
    return np.array([[c, -s], [s, c]])


def moons_arcs(n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free centred two-moons points and labels.

    Class 0 lies on the unit upper half circle centred at (-0.5, -0.25),
    class 1 on the unit lower half circle centred at (0.5, 0.25). Angles are
    uniform; class sizes are ``n - n // 2`` and ``n // 2``.
    """
    rng = np.random.default_rng(seed)
    n0 = n - n // 2
    n1 = n // 2
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    outer = np.column_stack([np.cos(t0) - 0.5, np.sin(t0) - 0.25])
    inner = np.column_stack([0.5 - np.cos(t1), 0.25 - np.sin(t1)])
    x = np.vstack([outer, inner])
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    return x[perm], y[perm]


def gen_two_moons(n: int, noise_sigma: float = 0.1, rotation_deg: float = 0.0, seed=None, name: str | None = None) -> Domain:
    """Two interleaved half circles, noised then rotated about the origin."""
    if n < 2:
        raise ValidationError("two-moons needs n >= 2")
    if noise_sigma < 0:
        raise ValidationError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    x, y = moons_arcs(n, rng)
    x = x + noise_sigma * rng.standard_normal(x.shape)
    x = x @ _rotation(rotation_deg).T
    return Domain(name or f"moons{rotation_deg:g}", x, y)


def gen_gaussian_blobs(k: int, n: int, means, cov_scale: float = 1.0, shift_vector=None, seed=None, name: str | None = None) -> Domain:
    """Isotropic Gaussian classes with covariance ``cov_scale * I`` around ``means + shift_vector``.

    Class ``j`` gets ``n // k`` points, plus one for the first ``n % k`` classes.
    """
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if means.shape[0] != k:
        raise ValidationError(f"means has {means.shape[0]} rows, expected k={k}")
    if cov_scale < 0:
        raise ValidationError("cov_scale must be >= 0")
    shift = np.zeros(means.shape[1]) if shift_vector is None else np.asarray(shift_vector, dtype=np.float64)
    rng = np.random.default_rng(seed)
    sizes = [n // k + (1 if j < n % k else 0) for j in range(k)]
    y = np.repeat(np.arange(k), sizes)
    x = means[y] + shift + np.sqrt(cov_scale) * rng.standard_normal((n, means.shape[1]))
    perm = rng.permutation(n)
    return Domain(name or "blobs", x[perm], y[perm])


def imbalance_counts(counts, k: int) -> np.ndarray:
    """Class ``i`` keeps ``floor(counts[i] * (i + 1) / k)`` points."""
    counts = np.asarray(counts, dtype=np.int64)
    return (counts * (np.arange(k) + 1)) // k


def apply_imbalance(domain: Domain, k: int, labels=None) -> Domain:
    """Keep the first ``(i+1)/k`` share of class ``i`` (in storage order).

    ``labels`` lets the caller subsample an unlabelled split using labels it
    holds privately; the returned domain keeps ``domain.labels`` as is.
    """
    y = domain.labels if labels is None else np.asarray(labels)
    if y is None:
        raise ValidationError("imbalance needs labels to select per-class subsets")
    keep = np.zeros(len(y), dtype=bool)
    targets = imbalance_counts(np.bincount(y, minlength=k), k)
    for j in range(k):
        idx = np.flatnonzero(y == j)[: targets[j]]
        keep[idx] = True
    return Domain(domain.name, domain.inputs[keep], None if domain.labels is None else domain.labels[keep], domain.split)


def _read_idx(path, magic: int):
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise ParseError(f"{path}: file too short for an IDX header", 0)
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise ParseError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise ParseError(f"{path}: truncated dimension header", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header_end])
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) < header_end + count:
        raise ParseError(f"{path}: truncated payload, need {count} bytes", len(data))
    if len(data) > header_end + count:
        raise ParseError(f"{path}: {len(data) - header_end - count} trailing bytes", header_end + count)
    payload = np.frombuffer(data, dtype=np.uint8, count=count, offset=header_end)
    return dims, payload


def load_idx(images_path, labels_path, name: str | None = None, split: str = "train") -> Domain:
    """Parse an IDX image/label file pair into a domain with inputs scaled to [0, 1]."""
    dims, pixels = _read_idx(images_path, IDX_IMAGES_MAGIC)
    ldims, labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if ldims[0] != dims[0]:
        raise ParseError(f"{labels_path}: {ldims[0]} labels for {dims[0]} images", 4)
    inputs = pixels.reshape(dims[0], dims[1] * dims[2]).astype(np.float64) / 255.0
    return Domain(name or Path(images_path).stem, inputs, labels.astype(np.int64), split)


@dataclass
class DomainSpec:
    kind: str
    rotation: float = 0.0
    noise: float | None = None
    shift: list[float] | None = None
    means: list[list[float]] | None = None
    cov_scale: float | None = None
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    name: str | None = None


@dataclass
class StreamConfig:
    domains: list[DomainSpec]
    n: int = 500
    n_test: int = 500
    noise: float = 0.1
    k: int | None = None
    means: list[list[float]] | None = None
    cov_scale: float = 0.5
    imbalance: bool = False
    standardize: bool = True


DEFAULT_BLOB_MEANS = [[0.0, 2.0], [-1.7320508075688772, -1.0], [1.7320508075688772, -1.0]]


def _build_domain(spec: DomainSpec, cfg: StreamConfig, n: int, seed, split: str) -> Domain:
    if spec.kind == "moons":
        noise = cfg.noise if spec.noise is None else spec.noise
        return gen_two_moons(n, noise, spec.rotation, seed, spec.name or f"moons{spec.rotation:g}")
    if spec.kind == "blobs":
        means = spec.means or cfg.means or DEFAULT_BLOB_MEANS
        k = len(means)
        scale = cfg.cov_scale if spec.cov_scale is None else spec.cov_scale
        dom = gen_gaussian_blobs(k, n, means, scale, spec.shift, seed)
        dom.name = spec.name or "blobs" + ("" if spec.shift is None else "+" + ",".join(f"{s:g}" for s in spec.shift))
        return dom
    if spec.kind == "idx":
        paths = (spec.images, spec.labels) if split == "train" else (spec.test_images or spec.images, spec.test_labels or spec.labels)
        if None in paths:
            raise ValidationError("idx domains need 'images' and 'labels' paths")
        dom = load_idx(*paths, name=spec.name, split=split)
        if len(dom) > n:  # keep the first n rows of the file
            dom = Domain(dom.name, dom.inputs[:n], dom.labels[:n], split)
        return dom
    raise ValidationError(f"unknown domain kind {spec.kind!r}")


def make_task_stream(cfg: StreamConfig, seed=0) -> TaskStream:
    """Build the stream in declaration order; the first domain is the labelled source.

    Inputs are standardized with the source training split's per-feature
    mean and standard deviation, applied unchanged to every split.
    """
    if not cfg.domains:
        raise ValidationError("a stream needs at least one (source) domain")
    root = np.random.SeedSequence(seed)
    trains, tests = [], []
    for spec, child in zip(cfg.domains, root.spawn(len(cfg.domains))):
        s_train, s_test = child.spawn(2)
        trains.append(_build_domain(spec, cfg, cfg.n, np.random.default_rng(s_train), "train"))
        test = _build_domain(spec, cfg, cfg.n_test, np.random.default_rng(s_test), "test")
        test.split = "test"
        tests.append(test)

    k = cfg.k
    if k is None:
        k = int(max(d.labels.max() for d in trains + tests if d.labels is not None and len(d))) + 1
    if cfg.imbalance:
        trains = [apply_imbalance(d, k) for d in trains]
        tests = [apply_imbalance(d, k) for d in tests]
    if cfg.standardize:
        mu = trains[0].inputs.mean(axis=0)
        sd = trains[0].inputs.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        for d in trains + tests:
            d.inputs = (d.inputs - mu) / sd
    dims = {d.dim for d in trains + tests}
    if len(dims) != 1:
        raise ValidationError(f"domains disagree on input dimension: {sorted(dims)}")
    # names must be unique for per-domain outputs
    names = [d.name for d in trains]
    for i, d in enumerate(trains):
        if names.count(d.name) > 1:
            d.name = f"{d.name}#{i}"
        tests[i].name = d.name
    return TaskStream(trains[0], [d.unlabeled() for d in trains[1:]], tests, k)
