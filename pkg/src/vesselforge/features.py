"""Per-voxel multiscale features for the logistic vessel classifier.

Base channels are the nearest-upsampled intensity of every Gaussian pyramid
level and, optionally, the central-difference gradient magnitude at each level.
A k-means codebook fitted on training voxels then appends one channel per
centroid holding the Euclidean distance to it. Every channel is z-scored with
statistics frozen at fit time so inference reproduces training features.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage as ndi

from .volume import Spacing, VolumeGrid, VolumeError

__all__ = [
    "PyramidLevel",
    "FeatureVolume",
    "Codebook",
    "FeatureConfig",
    "FeatureExtractor",
    "gaussian_kernel",
    "smooth",
    "gaussian_pyramid",
    "raw_channels",
    "voxel_features",
    "kmeans_fit",
    "kmeans_encode",
]


def gaussian_kernel(sigma: float, truncate: float = 4.0) -> np.ndarray:
    """Normalised 1D sampled Gaussian with radius ``int(truncate * sigma + 0.5)``."""
    if sigma <= 0:
        return np.ones(1)
    radius = int(truncate * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def smooth(data: np.ndarray, sigma_vox: float) -> np.ndarray:
    """Separable Gaussian smoothing with half-sample reflective boundaries."""
    out = np.asarray(data, dtype=np.float64)
    k = gaussian_kernel(sigma_vox)
    if k.size == 1:
        return out.copy()
    for axis in range(out.ndim):
        out = ndi.correlate1d(out, k, axis=axis, mode="reflect")
    return out


@dataclass(frozen=True, eq=False)
class PyramidLevel:
    level: int
    data: np.ndarray  # float64, dims ceil(dims0 / 2**level)
    spacing: Spacing
    sigma_mm: tuple[float, float, float]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)


def gaussian_pyramid(grid: VolumeGrid, levels: int = 3, sigma_vox: float = 1.0) -> list[PyramidLevel]:
    if levels < 1:
        raise VolumeError(f"levels must be >= 1, got {levels}")
    need = 2 ** (levels - 1)
    if any(n < need for n in grid.dims):
        raise VolumeError(f"grid {grid.dims} too small for {levels} pyramid levels (need >= {need} per axis)")
    data = grid.voxels.astype(np.float64)
    sp = grid.spacing.as_tuple()
    out = [PyramidLevel(0, data, grid.spacing, (0.0, 0.0, 0.0))]
    eff = np.zeros(3)  # accumulated smoothing in level-0 voxels
    for lev in range(1, levels):
        eff = np.sqrt(eff**2 + (sigma_vox * 2 ** (lev - 1)) ** 2)
        data = smooth(data, sigma_vox)[::2, ::2, ::2].copy()
        spacing = Spacing(*(s * 2**lev for s in sp))
        out.append(PyramidLevel(lev, data, spacing, tuple(float(e * s) for e, s in zip(eff, sp))))
    return out


def _upsample_index(n0: int, n_level: int, factor: int) -> np.ndarray:
    # level voxel j sits on level-0 voxel j * factor; pick the nearest one
    j = (np.arange(n0) + factor // 2) // factor
    return np.minimum(j, n_level - 1)


def _upsample(data: np.ndarray, dims0: Sequence[int], factor: int) -> np.ndarray:
    if factor == 1:
        return data
    iz, iy, ix = (_upsample_index(n0, n, factor) for n0, n in zip(dims0, data.shape))
    return data[np.ix_(iz, iy, ix)]


def _gradient_magnitude(data: np.ndarray, spacing: Spacing) -> np.ndarray:
    sq = np.zeros_like(data)
    for axis, d in enumerate(spacing.as_tuple()):
        if data.shape[axis] < 2:
            continue
        sq += np.gradient(data, d, axis=axis) ** 2
    return np.sqrt(sq)


def raw_channels(pyramid: Sequence[PyramidLevel], include_gradient: bool = True) -> np.ndarray:
    """Unnormalised base channels, shape ``(F, nz, ny, nx)`` on the level-0 grid.

    Channel order: intensities for levels 0..L-1, then gradient magnitudes
    (mm^-1 units) for levels 0..L-1.
    """
    if not pyramid:
        raise VolumeError("empty pyramid")
    dims0 = pyramid[0].dims
    chans = [_upsample(lv.data, dims0, 2**lv.level) for lv in pyramid]
    if include_gradient:
        chans += [_upsample(_gradient_magnitude(lv.data, lv.spacing), dims0, 2**lv.level) for lv in pyramid]
    return np.stack(chans, axis=0)


@dataclass(frozen=True, eq=False)
class FeatureVolume:
    """Normalised per-voxel features with the statistics used to normalise them."""

    features: np.ndarray  # (F, nz, ny, nx) float64
    mean: np.ndarray  # (F,)
    std: np.ndarray  # (F,)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.features.shape[1:])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[0])

    def matrix(self) -> np.ndarray:
        """Features as ``(n_voxels, F)`` in raster order (a view when possible)."""
        return self.features.reshape(self.n_features, -1).T


def _channel_stats(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = raw.reshape(raw.shape[0], -1)
    mean = flat.mean(axis=1)
    std = flat.std(axis=1)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def _normalise(raw: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (raw - mean[:, None, None, None]) / std[:, None, None, None]


def voxel_features(pyramid: Sequence[PyramidLevel], include_gradient: bool = True, stats=None) -> FeatureVolume:
    """Z-scored base channels. ``stats=(mean, std)`` reuses frozen training statistics."""
    raw = raw_channels(pyramid, include_gradient)
    if stats is None:
        mean, std = _channel_stats(raw)
    else:
        mean, std = (np.asarray(s, dtype=np.float64) for s in stats)
        if mean.shape != (raw.shape[0],):
            raise VolumeError(f"stats cover {mean.shape[0]} channels, features have {raw.shape[0]}")
    return FeatureVolume(_normalise(raw, mean, std), mean, std)


# --------------------------------------------------------------------------
# k-means


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray  # (k, F)
    seed: int
    inertia: float
    history: tuple[float, ...] = ()  # inertia after every assignment step
    n_iter: int = 0

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.centroids.shape[1])

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "F": self.n_features,
            "seed": self.seed,
            "inertia": self.inertia,
            "n_iter": self.n_iter,
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        c = np.asarray(d["centroids"], dtype=np.float64).reshape(int(d["k"]), int(d["F"]))
        return cls(c, int(d["seed"]), float(d.get("inertia", 0.0)), (), int(d.get("n_iter", 0)))


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(free[rng.integers(free.size)])
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(1))
    return x[chosen].copy()


def kmeans_fit(samples, k: int, seed: int = 0, max_iters: int = 50) -> Codebook:
    """Lloyd's algorithm from a seeded k-means++ start, run to an assignment fixpoint."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"samples must be (n, F), got shape {x.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if x.shape[0] < k:
        raise ValueError(f"need at least k={k} samples, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    assign = None
    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        d = _sq_dists(x, centroids)
        new_assign = d.argmin(1)
        history.append(float(d[np.arange(x.shape[0]), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = assign == j
            if members.any():  # empty clusters keep their centroid
                centroids[j] = x[members].mean(0)
    final = float(((x - centroids[_sq_dists(x, centroids).argmin(1)]) ** 2).sum())
    return Codebook(centroids, int(seed), final, tuple(history), n_iter)


def _distances(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    f = features.reshape(features.shape[0], -1)
    out = np.empty((centroids.shape[0], f.shape[1]))
    for j, c in enumerate(centroids):
        out[j] = np.sqrt(((f - c[:, None]) ** 2).sum(0))
    return out.reshape((centroids.shape[0],) + features.shape[1:])


def kmeans_encode(fv: FeatureVolume, codebook: Codebook, stats=None, normalise: bool = True) -> FeatureVolume:
    """Append one z-scored distance-to-centroid channel per codebook entry."""
    if codebook.n_features != fv.n_features:
        raise VolumeError(f"codebook has F={codebook.n_features}, features have F={fv.n_features}")
    dist = _distances(fv.features, codebook.centroids)
    if not normalise:
        mean, std = np.zeros(codebook.k), np.ones(codebook.k)
    elif stats is None:
        mean, std = _channel_stats(dist)
    else:
        mean, std = (np.asarray(s, dtype=np.float64) for s in stats)
    dist = _normalise(dist, mean, std)
    return FeatureVolume(
        np.concatenate([fv.features, dist], axis=0),
        np.concatenate([fv.mean, mean]),
        np.concatenate([fv.std, std]),
    )


# --------------------------------------------------------------------------
# fitted extractor used by training and inference


@dataclass(frozen=True)
class FeatureConfig:
    levels: int = 3
    sigma_vox: float = 1.0
    include_gradient: bool = True
    k: int = 8
    max_iters: int = 50
    kmeans_samples: int = 20000
    seed: int = 0

    @property
    def n_base(self) -> int:
        return self.levels * (2 if self.include_gradient else 1)

    @property
    def n_features(self) -> int:
        return self.n_base + self.k


@dataclass
class FeatureExtractor:
    """Feature pipeline with frozen normalisation statistics and codebook."""

    config: FeatureConfig = field(default_factory=FeatureConfig)
    base_mean: np.ndarray | None = None
    base_std: np.ndarray | None = None
    codebook: Codebook | None = None
    dist_mean: np.ndarray | None = None
    dist_std: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.base_mean is not None and (self.config.k == 0 or self.codebook is not None)

    def _raw(self, grid: VolumeGrid) -> np.ndarray:
        pyr = gaussian_pyramid(grid, self.config.levels, self.config.sigma_vox)
        return raw_channels(pyr, self.config.include_gradient)

    def fit(self, grids: Sequence[VolumeGrid]) -> "FeatureExtractor":
        cfg = self.config
        if not grids:
            raise ValueError("cannot fit features on an empty scan list")
        raws = [self._raw(g) for g in grids]
        n = sum(r[0].size for r in raws)
        mean = sum(r.reshape(r.shape[0], -1).sum(1) for r in raws) / n
        var = sum(((r.reshape(r.shape[0], -1) - mean[:, None]) ** 2).sum(1) for r in raws) / n
        std = np.sqrt(var)
        self.base_mean, self.base_std = mean, np.where(std > 0, std, 1.0)
        if cfg.k == 0:
            return self
        rng = np.random.default_rng(cfg.seed)
        per = max(cfg.kmeans_samples // len(raws), cfg.k)
        samples = []
        for r in raws:
            flat = ((r - self.base_mean[:, None, None, None]) / self.base_std[:, None, None, None]).reshape(
                r.shape[0], -1
            )
            idx = rng.choice(flat.shape[1], size=min(per, flat.shape[1]), replace=False)
            samples.append(flat[:, np.sort(idx)].T)
        self.codebook = kmeans_fit(np.concatenate(samples), cfg.k, cfg.seed, cfg.max_iters)
        sums = np.zeros(cfg.k)
        sq = np.zeros(cfg.k)
        for r in raws:
            d = _distances(_normalise(r, self.base_mean, self.base_std), self.codebook.centroids)
            sums += d.reshape(cfg.k, -1).sum(1)
        dmean = sums / n
        for r in raws:
            d = _distances(_normalise(r, self.base_mean, self.base_std), self.codebook.centroids)
            sq += ((d.reshape(cfg.k, -1) - dmean[:, None]) ** 2).sum(1)
        dstd = np.sqrt(sq / n)
        self.dist_mean, self.dist_std = dmean, np.where(dstd > 0, dstd, 1.0)
        return self

    def transform(self, grid: VolumeGrid) -> FeatureVolume:
        if not self.fitted:
            raise RuntimeError("FeatureExtractor.transform called before fit")
        pyr = gaussian_pyramid(grid, self.config.levels, self.config.sigma_vox)
        fv = voxel_features(pyr, self.config.include_gradient, stats=(self.base_mean, self.base_std))
        if self.config.k == 0:
            return fv
        return kmeans_encode(fv, self.codebook, stats=(self.dist_mean, self.dist_std))

    # -- serialisation
    def to_dict(self) -> dict:
        cfg = self.config
        d = {
            "config": {
                "levels": cfg.levels,
                "sigma_vox": cfg.sigma_vox,
                "include_gradient": cfg.include_gradient,
                "k": cfg.k,
                "max_iters": cfg.max_iters,
                "kmeans_samples": cfg.kmeans_samples,
                "seed": cfg.seed,
            },
            "base_mean": _listify(self.base_mean),
            "base_std": _listify(self.base_std),
            "codebook": None if self.codebook is None else self.codebook.to_dict(),
            "dist_mean": _listify(self.dist_mean),
            "dist_std": _listify(self.dist_std),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureExtractor":
        arr = lambda v: None if v is None else np.asarray(v, dtype=np.float64)  # noqa: E731
        return cls(
            FeatureConfig(**d["config"]),
            arr(d.get("base_mean")),
            arr(d.get("base_std")),
            None if d.get("codebook") is None else Codebook.from_dict(d["codebook"]),
            arr(d.get("dist_mean")),
            arr(d.get("dist_std")),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "FeatureExtractor":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _listify(a):
    if a is None:
        return None
    return [float(v) if math.isfinite(v) else None for v in np.asarray(a).ravel()]
