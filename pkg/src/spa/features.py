"""Four-hop unsupervised point feature extractor.

Each hop pools neighbor attributes into octants around every point, then
reduces the pooled vector with a data-driven orthonormal transform (one
constant "DC" kernel plus PCA kernels on the DC-removed residual). Hop 1
pools neighbor coordinates relative to the center, which makes every
downstream feature translation invariant. Hops 2-4 treat each retained
channel independently, expanding it through its own 8-dimensional kernel.
Channels are pruned when the product of energies along their ancestry
falls below a threshold; surviving channels from all four hops are
concatenated into the final per-point descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import PointCloud

__all__ = [
    "HopConfig",
    "SaabKernel",
    "RetainedChannel",
    "HopModel",
    "FeatureExtractor",
    "FeatureMatrix",
    "octant_pool",
    "fit_saab",
    "apply_saab",
    "train_feature_extractor",
    "extract_features",
]

N_HOPS = 4
ZERO_VARIANCE_EPS = 1e-24


@dataclass(frozen=True)
class HopConfig:
    """Neighborhood sizes, pruning threshold, and per-hop point budgets."""

    neighbors_per_hop: tuple = (32, 8, 8, 8)
    energy_threshold: float = 0.0001
    points_per_hop: tuple = (1024, 768, 512, 384)

    def __post_init__(self):
        k = tuple(int(v) for v in self.neighbors_per_hop)
        p = tuple(int(v) for v in self.points_per_hop)
        if len(k) != N_HOPS or len(p) != N_HOPS:
            raise ValueError("neighbors_per_hop and points_per_hop must each list 4 hops")
        if any(v < 8 for v in k):
            raise ValueError(f"every hop needs at least 8 neighbors, got {k}")
        if any(v < 1 for v in p):
            raise ValueError(f"points_per_hop must be positive, got {p}")
        if any(p[i] < p[i + 1] for i in range(N_HOPS - 1)):
            raise ValueError(f"points_per_hop must be nonincreasing, got {p}")
        t = float(self.energy_threshold)
        if not (0.0 < t < 1.0):
            raise ValueError(f"energy_threshold must be in (0, 1), got {t}")
        object.__setattr__(self, "neighbors_per_hop", k)
        object.__setattr__(self, "points_per_hop", p)
        object.__setattr__(self, "energy_threshold", t)


def _deflate_basis(d: int) -> np.ndarray:
    """Orthonormal (d, d-1) basis of the complement of the constant direction.

    Columns 1..d-1 of the Householder reflection mapping e0 onto the unit
    constant vector; exactly orthogonal to it by construction.
    """
    dc = np.full(d, 1.0 / np.sqrt(d))
    w = dc.copy()
    w[0] -= 1.0
    h = np.eye(d) - 2.0 * np.outer(w, w) / (w @ w)
    return h[:, 1:]


@dataclass(frozen=True)
class SaabKernel:
    """Orthonormal transform: constant DC kernel plus PCA kernels on the rest.

    Energies always cover the full fitted width (DC first, unit total).
    Kernels inside a trained extractor may carry only the leading AC rows
    that survived pruning, so ac_kernels can be shorter than energies[1:].
    """

    mean: np.ndarray
    ac_kernels: np.ndarray
    energies: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        ac = np.asarray(self.ac_kernels, dtype=np.float64)
        en = np.asarray(self.energies, dtype=np.float64).reshape(-1)
        d = mean.shape[0]
        if d < 2:
            raise ValueError("input_dim must be at least 2")
        if ac.ndim != 2 or ac.shape[1] != d:
            raise ValueError(f"ac_kernels must have shape (n_ac, {d}), got {ac.shape}")
        if en.shape[0] < 1 + ac.shape[0]:
            raise ValueError("energies must cover the DC channel plus every AC kernel")
        if np.any(en < 0.0) or abs(en.sum() - 1.0) > 1e-9:
            raise ValueError("energies must be nonnegative and sum to 1")
        if np.any(np.diff(en[1:]) > 1e-12):
            raise ValueError("AC energies must be nonincreasing")
        stack = np.vstack([np.full(d, 1.0 / np.sqrt(d)), ac])
        gram_err = np.abs(stack @ stack.T - np.eye(stack.shape[0])).max()
        if gram_err > 1e-9:
            raise ValueError(f"kernels are not mutually orthonormal (err {gram_err:.3e})")
        for a in (mean, ac, en):
            a.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "ac_kernels", ac)
        object.__setattr__(self, "energies", en)

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def n_outputs(self) -> int:
        return 1 + self.ac_kernels.shape[0]

    @property
    def dc_kernel(self) -> np.ndarray:
        d = self.input_dim
        return np.full(d, 1.0 / np.sqrt(d))


@dataclass(frozen=True)
class RetainedChannel:
    """Flat output channel index within a hop plus its ancestry energy product."""

    flat_channel: int
    cum_energy: float


@dataclass(frozen=True)
class HopModel:
    """Per-input-channel kernels and the channels that survive pruning."""

    kernels: tuple
    retained: tuple

    def __post_init__(self):
        if len(self.kernels) < 1:
            raise ValueError("hop must have at least one kernel")
        if len(self.retained) < 1:
            raise ValueError("hop must retain at least one channel")
        flats = [rc.flat_channel for rc in self.retained]
        if flats != sorted(set(flats)):
            raise ValueError("retained channels must be distinct and ascending")
        width = sum(k.n_outputs for k in self.kernels)
        if flats[-1] >= width:
            raise ValueError("retained channel index exceeds hop output width")
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "retained", tuple(self.retained))

    @property
    def n_retained(self) -> int:
        return len(self.retained)


@dataclass(frozen=True)
class FeatureExtractor:
    """Trained four-hop model; feature_dim is the concatenated output width."""

    config: HopConfig
    hops: tuple

    def __post_init__(self):
        if len(self.hops) != N_HOPS:
            raise ValueError(f"extractor must have exactly {N_HOPS} hops")
        object.__setattr__(self, "hops", tuple(self.hops))
        if self.feature_dim < 3:
            raise ValueError(f"feature_dim must be >= 3, got {self.feature_dim}")

    @property
    def feature_dim(self) -> int:
        return sum(h.n_retained for h in self.hops)


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-point feature rows; row i describes point i of the originating cloud."""

    features: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError(f"features must be a nonempty 2-D array, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("features contain non-finite entries")
        f.flags.writeable = False
        object.__setattr__(self, "features", f)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def octant_pool(cloud: PointCloud, attributes, center: int, k: int) -> np.ndarray:
    """Mean attribute per octant around one point, concatenated in octant order.

    Octant membership comes from the signs of neighbor-minus-center
    coordinates (zero counts as positive); order is (+,+,+), (+,+,-),
    (+,-,+), (+,-,-), (-,+,+), (-,+,-), (-,-,+), (-,-,-). Octants with no
    neighbors contribute zeros.
    """
    attrs = np.ascontiguousarray(attributes, dtype=np.float64)
    if attrs.ndim != 2 or attrs.shape[0] != cloud.n:
        raise ValueError(f"attributes must have shape ({cloud.n}, C), got {attrs.shape}")
    if not (1 <= k <= cloud.n):
        raise ValueError(f"k must be in [1, {cloud.n}], got {k}")
    if not (0 <= center < cloud.n):
        raise ValueError(f"center must be a valid point index, got {center}")
    centers = np.array([center], dtype=np.int64)
    neigh = _kernels.knn(cloud.points, cloud.points[centers], k)
    return _kernels.octant_pool_batch(cloud.points, attrs, centers, neigh, False)[0]


def fit_saab(samples) -> SaabKernel:
    """Learn a kernel from training vectors (rows of `samples`).

    The DC channel projects onto the constant direction; AC kernels are the
    eigenvectors of the covariance of the mean- and DC-removed samples,
    ordered by descending eigenvalue, each flipped so its largest-magnitude
    entry is positive. Energies are per-channel second moments normalized to
    unit sum; a zero-variance sample set yields DC energy 1.
    """
    x = np.ascontiguousarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"samples must be a 2-D array, got shape {x.shape}")
    n, d = x.shape
    if d < 2:
        raise ValueError("sample dimension must be at least 2")
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} samples for dimension {d}, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    basis = _deflate_basis(d)
    projected = centered @ basis
    cov = projected.T @ projected / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    ac = (basis @ eigvecs[:, order]).T
    for row in ac:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0.0:
            row *= -1.0
    dc = np.full(d, 1.0 / np.sqrt(d))
    dc_energy = float(np.mean((centered @ dc) ** 2))
    raw = np.concatenate([[dc_energy], eigvals])
    total = float(raw.sum())
    scale = float(max(1.0, mean @ mean))
    if total <= ZERO_VARIANCE_EPS * scale:
        energies = np.zeros(d)
        energies[0] = 1.0
    else:
        energies = raw / total
    return SaabKernel(mean, ac, energies)


def apply_saab(kernel: SaabKernel, x, keep: int) -> np.ndarray:
    """First `keep` channel responses for one input vector."""
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != kernel.input_dim:
        raise ValueError(f"expected vector of dimension {kernel.input_dim}, got {v.shape[0]}")
    if not (1 <= keep <= kernel.n_outputs):
        raise ValueError(f"keep must be in [1, {kernel.n_outputs}], got {keep}")
    return _saab_responses(kernel, v[None, :])[0, :keep]


def _saab_responses(kernel: SaabKernel, x: np.ndarray) -> np.ndarray:
    """All channel responses for rows of x, DC first."""
    centered = x - kernel.mean
    dc = centered @ kernel.dc_kernel
    ac = centered @ kernel.ac_kernels.T
    return np.column_stack([dc, ac])


def _downsample(points: np.ndarray, cap: int) -> np.ndarray:
    """Ascending original indices of a farthest-point subset of size <= cap."""
    n = points.shape[0]
    if n <= cap:
        return np.arange(n, dtype=np.int64)
    return np.sort(_kernels.farthest_point_indices(points, cap, 0))


def _pool_hop(points: np.ndarray, attrs: np.ndarray, k: int) -> np.ndarray:
    """Octant-pool every point's attributes over its k neighbors: (n, 8*C)."""
    centers = np.arange(points.shape[0], dtype=np.int64)
    neigh = _kernels.knn(points, points, k)
    return _kernels.octant_pool_batch(points, attrs, centers, neigh, False)


def _pool_hop1(points: np.ndarray, k: int) -> np.ndarray:
    """Hop-1 pooling: relative neighbor coordinates as attributes, (n, 24)."""
    centers = np.arange(points.shape[0], dtype=np.int64)
    neigh = _kernels.knn(points, points, k)
    return _kernels.octant_pool_batch(points, points, centers, neigh, True)


def _check_cloud_size(n: int, config: HopConfig):
    need = max(config.neighbors_per_hop)
    if n < need:
        raise ValueError(f"cloud has {n} points but hops need at least {need}")


class _HopState:
    """Per-cloud working set and retained responses flowing into the next hop."""

    __slots__ = ("points", "responses")

    def __init__(self, points, responses):
        self.points = points
        self.responses = responses


def _channel_samples(pooled: np.ndarray, n_channels: int):
    """Split octant-major pooled rows (n, 8*C) into C per-channel (n, 8) blocks."""
    n = pooled.shape[0]
    cube = pooled.reshape(n, 8, n_channels)
    return [np.ascontiguousarray(cube[:, :, c]) for c in range(n_channels)]


def _hop_outputs(kernels, pooled: np.ndarray, n_channels: int) -> np.ndarray:
    """All flat-channel responses of a hop: kernels applied channel-wise."""
    blocks = _channel_samples(pooled, n_channels)
    outs = [_saab_responses(k, b) for k, b in zip(kernels, blocks)]
    return np.column_stack(outs)


def _retain(kernels, parent_cums, threshold: float, hop_no: int):
    """Prune flat channels whose ancestry energy product drops below threshold."""
    retained = []
    offset = 0
    for kernel, parent in zip(kernels, parent_cums):
        cums = parent * kernel.energies
        for j, c in enumerate(cums):
            if c >= threshold:
                retained.append(RetainedChannel(offset + j, float(c)))
        offset += kernel.n_outputs
    if not retained:
        raise ValueError(
            f"energy threshold {threshold} prunes every channel at hop {hop_no}; "
            "lower the threshold or provide more varied training data"
        )
    return tuple(retained)


def _prune_hop(kernels, retained):
    """Drop AC rows for channels below the threshold; remap flat indices.

    A kernel's retained AC channels are a prefix of its rows (AC energies are
    nonincreasing, so cumulative energies are too), which lets truncation
    preserve channel order. Kernels whose channels were all pruned stay as
    mean-plus-DC stubs so the kernel list keeps one entry per input channel.
    """
    old_bases = np.concatenate([[0], np.cumsum([k.n_outputs for k in kernels])])
    keep = [0] * len(kernels)
    owners = []
    for rc in retained:
        i = int(np.searchsorted(old_bases, rc.flat_channel, side="right")) - 1
        owners.append(i)
        j = rc.flat_channel - old_bases[i]
        if j > 0:
            keep[i] = max(keep[i], j)
    pruned = tuple(
        SaabKernel(k.mean, k.ac_kernels[:m], k.energies)
        for k, m in zip(kernels, keep)
    )
    new_bases = np.concatenate([[0], np.cumsum([k.n_outputs for k in pruned])])
    remapped = tuple(
        RetainedChannel(
            int(new_bases[i] + (rc.flat_channel - old_bases[i])), rc.cum_energy
        )
        for rc, i in zip(retained, owners)
    )
    return pruned, remapped


def train_feature_extractor(training_clouds, config: HopConfig = HopConfig()) -> FeatureExtractor:
    """Fit the four-hop model from target clouds in one deterministic pass.

    Each hop pools attributes on a farthest-point subset of at most
    points_per_hop[h] points per cloud, fits kernels on the pooled vectors
    from all clouds, prunes by cumulative energy, and feeds the surviving
    responses forward.
    """
    clouds = list(training_clouds)
    if not clouds:
        raise ValueError("need at least one training cloud")
    for c in clouds:
        _check_cloud_size(c.n, config)

    states = []
    for c in clouds:
        idx = _downsample(c.points, config.points_per_hop[0])
        states.append(_HopState(np.ascontiguousarray(c.points[idx]), None))

    hops = []
    parent_cums = [np.array([1.0])]
    for h in range(N_HOPS):
        k = config.neighbors_per_hop[h]
        if h > 0:
            cap = config.points_per_hop[h]
            for st in states:
                sel = _downsample(st.points, cap)
                st.points = np.ascontiguousarray(st.points[sel])
                st.responses = np.ascontiguousarray(st.responses[sel])

        if h == 0:
            pooled_per_cloud = [_pool_hop1(st.points, k) for st in states]
            n_channels = 1
        else:
            pooled_per_cloud = [_pool_hop(st.points, st.responses, k) for st in states]
            n_channels = states[0].responses.shape[1]

        all_pooled = np.vstack(pooled_per_cloud)
        if h == 0:
            kernels = (fit_saab(all_pooled),)
        else:
            kernels = tuple(fit_saab(b) for b in _channel_samples(all_pooled, n_channels))

        retained = _retain(kernels, parent_cums[h], config.energy_threshold, h + 1)
        kernels, retained = _prune_hop(kernels, retained)
        hops.append(HopModel(kernels, retained))
        parent_cums.append(np.array([rc.cum_energy for rc in retained]))

        flat = np.array([rc.flat_channel for rc in retained])
        for st, pooled in zip(states, pooled_per_cloud):
            if h == 0:
                outs = _saab_responses(kernels[0], pooled)
            else:
                outs = _hop_outputs(kernels, pooled, n_channels)
            st.responses = outs[:, flat]

    return FeatureExtractor(config, tuple(hops))


def extract_features(extractor: FeatureExtractor, cloud: PointCloud) -> FeatureMatrix:
    """Per-point descriptors for every point of `cloud`.

    Hop outputs are computed on that hop's downsampled working set and copied
    back to all points from the nearest working-set point.
    """
    config = extractor.config
    _check_cloud_size(cloud.n, config)
    all_points = cloud.points

    points = np.ascontiguousarray(all_points[_downsample(all_points, config.points_per_hop[0])])
    responses = None
    per_hop_full = []
    for h in range(N_HOPS):
        k = config.neighbors_per_hop[h]
        if h > 0:
            sel = _downsample(points, config.points_per_hop[h])
            points = np.ascontiguousarray(points[sel])
            responses = np.ascontiguousarray(responses[sel])

        hop = extractor.hops[h]
        if h == 0:
            pooled = _pool_hop1(points, k)
            outs = _saab_responses(hop.kernels[0], pooled)
        else:
            pooled = _pool_hop(points, responses, k)
            outs = _hop_outputs(hop.kernels, pooled, responses.shape[1])

        flat = np.array([rc.flat_channel for rc in hop.retained])
        responses = outs[:, flat]

        nearest = _kernels.knn(points, all_points, 1)[:, 0]
        per_hop_full.append(responses[nearest])

    return FeatureMatrix(np.column_stack(per_hop_full))
