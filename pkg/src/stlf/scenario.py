"""Reproducible desk-scale network scenarios.

Domains are Gaussian class blobs sharing one set of class means, moved around
per domain by a rotation (in the plane of the first two features) and a
translation. Devices receive non-i.i.d. shares of a domain through per-device
Dirichlet label proportions; the first half of the network keeps a random
fraction of its labels and the rest is fully unlabeled.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, FormatError

MODES = ("single", "mixed", "split")

# independent RNG streams per generation stage
_DOMAIN_STREAM = 11
_PARTITION_STREAM = 23
_COMM_STREAM = 37

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def make_rng(seed, *tags):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


@dataclass
class ScenarioConfig:
    num_devices: int = 10
    samples_per_device: int = 300
    mode: str = "single"
    num_domains: int = 1
    num_classes: int = 4
    feature_dim: int = 8
    class_sep: float = 1.5
    class_cov_scale: float = 1.0
    shift_scale: float = 4.0
    rotation_scale: float = 0.0
    label_subset_size: int | None = None
    dirichlet_beta: float = 0.5
    labeled_fraction_range: tuple = (0.3, 0.9)
    num_labeled: int | None = None
    p_min_dbm: float = 23.0
    p_max_dbm: float = 25.0
    r_min_bps: float = 63e6
    r_max_bps: float = 85e6
    model_bits: int = 1_000_000_000

    def __post_init__(self):
        self.labeled_fraction_range = tuple(float(v) for v in self.labeled_fraction_range)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.num_domains < 1:
            raise ConfigurationError("num_domains must be >= 1")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2")
        if self.feature_dim < 2:
            raise ConfigurationError("feature_dim must be >= 2")
        if self.num_devices < 1 or self.samples_per_device < 1:
            raise ConfigurationError("num_devices and samples_per_device must be >= 1")
        if not self.dirichlet_beta > 0:
            raise ConfigurationError("dirichlet_beta must be > 0")
        lo, hi = self.labeled_fraction_range
        if not (0 < lo <= hi <= 1):
            raise ConfigurationError("labeled_fraction_range must lie in (0, 1]")
        if self.class_cov_scale <= 0:
            raise ConfigurationError("class_cov_scale must be > 0")
        if self.label_subset_size is not None and not 1 <= self.label_subset_size <= self.num_classes:
            raise ConfigurationError("label_subset_size must be in [1, num_classes]")
        if self.num_labeled is not None and not 0 <= self.num_labeled <= self.num_devices:
            raise ConfigurationError("num_labeled must be in [0, num_devices]")
        if self.p_min_dbm > self.p_max_dbm:
            raise ConfigurationError("invalid power range")
        if not (0 < self.r_min_bps <= self.r_max_bps):
            raise ConfigurationError("invalid rate range")
        if self.model_bits < 0:
            raise ConfigurationError("model_bits must be >= 0")
        return self


@dataclass
class DomainSpec:
    id: int
    class_means: np.ndarray
    class_cov_scale: float
    shift: np.ndarray
    rotation_angle: float
    label_subset: tuple

    def __post_init__(self):
        if len(self.class_means) == 0:
            raise DomainError("class_means must be nonempty")
        if not self.label_subset:
            raise DomainError("label_subset must be nonempty")
        if min(self.label_subset) < 0 or max(self.label_subset) >= len(self.class_means):
            raise DomainError("label_subset outside class range")
        if self.class_cov_scale <= 0:
            raise DomainError("class_cov_scale must be > 0")

    @property
    def num_classes(self):
        return len(self.class_means)

    def transform(self, x):
        """Rotate each coordinate pair (0,1), (2,3), ... by the domain angle, then shift."""
        c, s = math.cos(self.rotation_angle), math.sin(self.rotation_angle)
        out = np.array(x, dtype=float, copy=True)
        x0, x1 = out[:, 0:-1:2].copy(), out[:, 1::2].copy()
        out[:, 0:-1:2] = c * x0 - s * x1
        out[:, 1::2] = s * x0 + c * x1
        return out + self.shift

    def sample(self, labels, rng):
        labels = np.asarray(labels, dtype=np.int64)
        dim = self.class_means.shape[1]
        noise = rng.standard_normal((len(labels), dim)) * math.sqrt(self.class_cov_scale)
        return self.transform(self.class_means[labels] + noise)


@dataclass
class DeviceDataset:
    """Features plus partially observed labels (-1 marks an unlabeled sample).

    ``true_labels`` keeps the full ground truth for evaluation only; the
    pipeline never trains on it.
    """

    features: np.ndarray
    labels: np.ndarray
    domain_id: int = 0
    true_labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise DomainError("features must be a 2-D array")
        labels = np.array([-1 if v is None else v for v in self.labels], dtype=np.int64) \
            if not isinstance(self.labels, np.ndarray) else self.labels.astype(np.int64)
        self.labels = labels
        if len(self.labels) != self.features.shape[0]:
            raise DomainError("feature row count must equal label count")
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if len(self.true_labels) != len(self.labels):
                raise DomainError("true_labels length mismatch")

    def __len__(self):
        return self.features.shape[0]

    @property
    def labeled_mask(self):
        return self.labels >= 0

    @property
    def num_labeled(self):
        return int(self.labeled_mask.sum())

    @property
    def num_unlabeled(self):
        return len(self) - self.num_labeled

    def subset(self, idx):
        idx = np.asarray(idx)
        tl = None if self.true_labels is None else self.true_labels[idx]
        return DeviceDataset(self.features[idx], self.labels[idx], self.domain_id, tl)


@dataclass
class CommProfile:
    tx_power_dbm: np.ndarray
    rate_bps: np.ndarray
    model_bits: int

    @property
    def num_devices(self):
        return len(self.tx_power_dbm)


@dataclass
class Scenario:
    devices: list
    comm: CommProfile
    seed: int
    num_devices: int
    domains: list = field(default_factory=list)
    config: ScenarioConfig | None = None

    def __post_init__(self):
        if self.num_devices != len(self.devices):
            raise DomainError("num_devices must equal the number of devices")

    @property
    def labeled(self):
        return np.array([d.num_labeled > 0 for d in self.devices])

    @property
    def sizes(self):
        return np.array([len(d) for d in self.devices])


def _unit(v):
    return v / np.linalg.norm(v)


def synthesize_domains(config, rng_seed):
    """Build ``config.num_domains`` domain specs, deterministic in ``rng_seed``."""
    config.validate()
    rng = make_rng(rng_seed, _DOMAIN_STREAM)
    dim, k = config.feature_dim, config.num_classes
    means = rng.standard_normal((k, dim)) * config.class_sep
    direction = _unit(rng.standard_normal(dim))
    subset_size = config.label_subset_size or k

    specs = []
    for d in range(config.num_domains):
        if subset_size < k:
            subset = tuple(sorted(rng.choice(k, subset_size, replace=False).tolist()))
        else:
            subset = tuple(range(k))
        if config.mode == "single":
            shift, angle = np.zeros(dim), 0.0
        elif config.mode == "split":
            # collinear, equally spaced: neighbours sit shift_scale apart
            shift, angle = d * config.shift_scale * direction, d * config.rotation_scale
        else:
            shift = np.zeros(dim) if d == 0 else config.shift_scale * _unit(rng.standard_normal(dim))
            angle = d * config.rotation_scale
        specs.append(DomainSpec(d, means.copy(), config.class_cov_scale, shift, float(angle), subset))
    return specs


def _largest_remainder(p, n):
    raw = p * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def partition(domains, config, rng_seed):
    """Draw every device's dataset and the network's communication profile."""
    config.validate()
    if not domains:
        raise ConfigurationError("at least one domain is required")
    rng = make_rng(rng_seed, _PARTITION_STREAM)
    n_dev, n = config.num_devices, config.samples_per_device
    n_labeled = math.ceil(n_dev / 2) if config.num_labeled is None else config.num_labeled
    lo, hi = config.labeled_fraction_range

    devices = []
    for dev in range(n_dev):
        if config.mode == "mixed":
            dom_of_sample = rng.integers(len(domains), size=n)
            domain_id = -1
        else:
            domain_id = dev % len(domains) if config.mode == "split" else 0
            dom_of_sample = np.full(n, domain_id)

        labels = np.empty(n, dtype=np.int64)
        feats = np.empty((n, config.feature_dim))
        for d_idx in np.unique(dom_of_sample):
            spec = domains[d_idx]
            where = np.flatnonzero(dom_of_sample == d_idx)
            subset = np.asarray(spec.label_subset)
            props = rng.dirichlet(np.full(len(subset), config.dirichlet_beta))
            counts = _largest_remainder(props, len(where))
            lab = np.repeat(subset, counts)
            rng.shuffle(lab)
            labels[where] = lab
            feats[where] = spec.sample(lab, rng)

        observed = np.full(n, -1, dtype=np.int64)
        if dev < n_labeled:
            frac = rng.uniform(lo, hi)
            k = min(n, max(1, int(round(frac * n))))
            keep = rng.choice(n, k, replace=False)
            observed[keep] = labels[keep]
        devices.append(DeviceDataset(feats, observed, domain_id, labels))

    comm = make_comm_profile(config, rng_seed)
    return Scenario(devices, comm, int(rng_seed), n_dev, list(domains), config)


def make_comm_profile(config, rng_seed):
    rng = make_rng(rng_seed, _COMM_STREAM)
    n_dev = config.num_devices
    power = rng.uniform(config.p_min_dbm, config.p_max_dbm, size=n_dev)
    rate = rng.uniform(config.r_min_bps, config.r_max_bps, size=(n_dev, n_dev))
    return CommProfile(power, rate, int(config.model_bits))


def build_scenario(config, seed):
    return partition(synthesize_domains(config, seed), config, seed)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def energy_constant(comm, i, j):
    """Joules to ship one model from ``i`` to ``j``: (bits / rate) * watts."""
    if i == j:
        raise DomainError("energy constant is undefined for i == j")
    return comm.model_bits / comm.rate_bps[i, j] * float(dbm_to_watts(comm.tx_power_dbm[i]))


def energy_matrix(comm):
    """All pairwise energy constants; the diagonal is zero."""
    watts = dbm_to_watts(comm.tx_power_dbm)
    k = comm.model_bits / comm.rate_bps * watts[:, None]
    np.fill_diagonal(k, 0.0)
    return k


def load_idx(path_images, path_labels):
    """Read an IDX image/label file pair into a fully labeled dataset."""
    raw_img = Path(path_images).read_bytes()
    raw_lab = Path(path_labels).read_bytes()
    if len(raw_img) < 16 or len(raw_lab) < 8:
        raise FormatError("truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", raw_img[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad image magic 0x{magic:08x}")
    lmagic, lcount = struct.unpack(">II", raw_lab[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad label magic 0x{lmagic:08x}")
    if count != lcount:
        raise FormatError(f"image count {count} != label count {lcount}")
    pixels = np.frombuffer(raw_img, dtype=np.uint8, offset=16)
    if pixels.size != count * rows * cols:
        raise FormatError("image payload size does not match header")
    labels = np.frombuffer(raw_lab, dtype=np.uint8, offset=8)
    if labels.size != count:
        raise FormatError("label payload size does not match header")
    feats = pixels.reshape(count, rows * cols).astype(float) / 255.0
    labels = labels.astype(np.int64)
    return DeviceDataset(feats, labels.copy(), 0, labels.copy())


def write_idx(path_images, path_labels, images, labels):
    """Write uint8 images (count x rows x cols) and labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    Path(path_images).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols) + images.tobytes())
    Path(path_labels).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())
