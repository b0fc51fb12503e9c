"""
================================================================================
Occupancy Grid
================================================================================
| Coarse binary grid over the scene box marking cells with non-negligible
| density. Rays are sampled only inside occupied cells.

| The density cache is refreshed from the field every few training steps:
| cache <- max(decay * cache, max over conditions of sigma at a jittered
| point inside every cell).

"""
import numpy as np
from ..ernf_core import _get_logger, ContractError
from ..geom import Aabb

# module globals
logger = _get_logger(__name__)


class OccupancyGrid(object):
    r"""
    Density cache over a resolution**3 grid covering aabb

    Parameters
    ----------
    resolution : int
        cells per axis
    threshold : float
        a cell is occupied when its cached density is >= threshold
    decay : float
        multiplicative decay applied to the cache on each update
    update_interval : int
        training steps between updates
    aabb : Aabb
        box covered by the grid
    """
    def __init__(self, resolution=32, threshold=0.01, decay=0.95,
                 update_interval=16, aabb=None):
        super().__init__()
        if resolution < 1:
            raise ContractError('occupancy grid resolution must be >= 1')
        self.resolution = int(resolution)
        self.threshold = float(threshold)
        self.decay = float(decay)
        self.update_interval = int(update_interval)
        self.aabb = Aabb() if aabb is None else aabb
        self.density_cache = np.zeros((self.resolution,)*3)
        self.initialized = False

    @property
    def occupied(self):
        r"""boolean occupancy bitmap indexed [i, j, k] along x, y, z"""
        return self.density_cache >= self.threshold

    @property
    def occupancy_fraction(self):
        r"""fraction of occupied cells"""
        return float(np.mean(self.occupied))

    def cell_centers(self):
        r"""returns (resolution**3, 3) normalized cell centers in C order"""
        ticks = (np.arange(self.resolution) + 0.5) / self.resolution
        grid = np.stack(np.meshgrid(ticks, ticks, ticks, indexing='ij'), axis=-1)
        return grid.reshape(-1, 3)

    def cell_index(self, u):
        r"""
        Maps normalized points (..., 3) to integer cell indices (..., 3)
        """
        index = np.floor(np.asarray(u, dtype=float) * self.resolution)
        return np.clip(index, 0, self.resolution - 1).astype(np.int64)

    def is_occupied(self, u):
        r"""looks up the occupancy of normalized points (..., 3)"""
        idx = self.cell_index(u)
        return self.occupied[idx[..., 0], idx[..., 1], idx[..., 2]]

    def should_update(self, step):
        r"""returns True on steps where the cache is refreshed"""
        return step % self.update_interval == 0

    def update(self, density_fn, conditions, rng=None):
        r"""
        Refreshes the density cache.

        Parameters
        ----------
        density_fn : callable
            density_fn(points, condition) returns sigma for normalized
            points (M, 3)
        conditions : sequence
            conditions to take the maximum over, passed through to
            density_fn unchanged
        rng : numpy.random.Generator, optional
            jitter source, cell centers are used when omitted
        """
        centers = self.cell_centers()
        if rng is not None:
            jitter = rng.uniform(-0.5, 0.5, size=centers.shape) / self.resolution
            centers = centers + jitter
        #
        fresh = np.zeros(centers.shape[0])
        for condition in conditions:
            sigma = np.asarray(density_fn(centers, condition), dtype=float)
            fresh = np.maximum(fresh, np.nan_to_num(sigma, nan=0.0))
        #
        fresh = fresh.reshape(self.density_cache.shape)
        self.density_cache = np.maximum(self.density_cache * self.decay, fresh)
        self.initialized = True
        logger.debug('occupancy updated, %.3f of cells occupied',
                     self.occupancy_fraction)

    def set_bitmap(self, bitmap):
        r"""
        Restores a boolean bitmap, occupied cells get a cache value equal to
        the threshold
        """
        bitmap = np.asarray(bitmap, dtype=bool).reshape(self.density_cache.shape)
        self.density_cache = np.where(bitmap, max(self.threshold, 1e-12), 0.0)
        self.initialized = True

    def sample_rays(self, origins, directions, t_near, t_far, num_samples, rng=None):
        r"""
        Places num_samples stratified samples per ray over the occupied part
        of [t_near, t_far]. Sample spacing is measured along the occupied
        length so empty gaps carry no weight.

        Returns
        -------
        t, delta : (B, num_samples) arrays
        valid : (B,) boolean, False for rays that cross no occupied cell
        """
        origins = np.atleast_2d(origins)
        directions = np.atleast_2d(directions)
        t_near = np.atleast_1d(np.asarray(t_near, dtype=float))
        t_far = np.atleast_1d(np.asarray(t_far, dtype=float))
        num_rays = origins.shape[0]
        if num_samples < 1:
            raise ContractError('number of samples must be >= 1')
        jitter = 0.5 if rng is None else rng.random((num_rays, num_samples))
        strata = (np.arange(num_samples) + jitter) / num_samples
        #
        if not self.initialized or np.all(self.occupied):
            span = t_far - t_near
            t = t_near[:, None] + strata * span[:, None]
            delta = np.concatenate([np.diff(t, axis=1), t_far[:, None] - t[:, -1:]], axis=1)
            return t, delta, np.ones(num_rays, dtype=bool)
        #
        edges, seg_len, occ = self._ray_segments(origins, directions, t_near, t_far)
        cum = np.concatenate([np.zeros((num_rays, 1)),
                              np.cumsum(seg_len * occ, axis=1)], axis=1)
        total = cum[:, -1]
        s = strata * total[:, None]
        #
        # segment holding s: last k with cum[k] <= s, always of positive length
        seg = np.sum(cum[:, None, :] <= s[:, :, None], axis=-1) - 1
        seg = np.clip(seg, 0, seg_len.shape[1] - 1)
        start = np.take_along_axis(edges, seg, axis=1)
        offset = s - np.take_along_axis(cum, seg, axis=1)
        t = start + offset
        delta = np.concatenate([np.diff(s, axis=1), total[:, None] - s[:, -1:]], axis=1)
        #
        valid = total > 0.0
        t[~valid] = t_near[~valid, None]
        delta[~valid] = 0.0
        return t, delta, valid

    def _ray_segments(self, origins, directions, t_near, t_far):
        r"""
        Splits every ray at the grid cell boundaries.

        Returns
        -------
        edges : (B, S+1) sorted segment end points in t
        seg_len : (B, S) segment lengths
        occ : (B, S) occupancy of each segment
        """
        u0 = (origins - self.aabb.min) / self.aabb.extent
        du = directions / self.aabb.extent
        ticks = np.arange(self.resolution + 1) / self.resolution
        with np.errstate(divide='ignore', invalid='ignore'):
            crossings = (ticks[None, None, :] - u0[:, :, None]) / du[:, :, None]
        crossings = crossings.reshape(origins.shape[0], -1)
        inside = np.isfinite(crossings)
        inside &= (crossings > t_near[:, None]) & (crossings < t_far[:, None])
        crossings = np.where(inside, crossings, t_far[:, None])
        edges = np.sort(np.concatenate([t_near[:, None], crossings, t_far[:, None]], axis=1),
                        axis=1)
        #
        seg_len = np.diff(edges, axis=1)
        mid = 0.5 * (edges[:, :-1] + edges[:, 1:])
        points = u0[:, None, :] + mid[:, :, None] * du[:, None, :]
        occ = self.is_occupied(points) & (seg_len > 0.0)
        return edges, seg_len, occ

    def skip_empty(self, ray, num_samples, rng=None):
        r"""
        Returns the sorted sample t-values of a single ray inside occupied
        cells. The array is empty when a maintained grid has no occupied cell
        on the ray; an unmaintained grid samples the whole ray.
        """
        t, _, valid = self.sample_rays(ray.origin[None, :], ray.direction[None, :],
                                       ray.t_near, ray.t_far, num_samples, rng)
        if not valid[0]:
            return np.empty(0)
        return t[0]
