"""
================================================================================
Hash Collisions
================================================================================
| Counts hash collisions of a single grid level for a set of query points and
| compares a 3-D hash grid with the tri-plane factorization as the image side
| R and the samples per ray N grow.

| A collision count is the number of distinct accessed lattice vertices in
| excess of the table slots they occupy, i.e. the sum over slots of
| max(0, n_s - 1).

"""
from collections import namedtuple, OrderedDict
import numpy as np
from scipy import stats as sp_stats
import yaml
from .ernf_core import _get_logger, ContractError, check_overwrite, ordered_map
from .encoding.hash_grid import HashGridConfig, corner_offsets, hash_vertex
from .encoding.tri_plane import PLANE_AXES

# module globals
logger = _get_logger(__name__)
CSV_COLUMNS = ('encoder', 'R', 'N', 'level_res', 'table_size',
               'distinct_vertices', 'collisions', 'plane')
DEFAULT_RESOLUTION = 512
DEFAULT_TABLE_LOG2 = 14


class CollisionReport(namedtuple('CollisionReport',
                                 ['label', 'resolution', 'table_size',
                                  'distinct_vertices', 'collisions', 'planes'])):
    r"""
    Collision count of one encoder at one level. For the tri-plane encoder
    planes maps plane name -> (distinct vertices, collisions), the totals
    are their sums.
    """
    __slots__ = ()

    def csv_rows(self, R='', N=''):
        r"""returns CSV row strings, one per plane plus the total"""
        fmt = '{},{},{},{:d},{:d},{:d},{:d},{}'
        rows = []
        for plane, (distinct, collisions) in self.planes.items():
            rows.append(fmt.format(self.label, R, N, self.resolution, self.table_size,
                                   distinct, collisions, plane))
        rows.append(fmt.format(self.label, R, N, self.resolution, self.table_size,
                               self.distinct_vertices, self.collisions, 'total'))
        return rows


#
########################################################################
#  Counting
########################################################################


def accessed_vertices(points, resolution):
    r"""
    Returns the sorted distinct lattice vertices (K, dims) touched by the
    interpolation of every point
    """
    points = np.clip(np.asarray(points, dtype=float), 0.0, 1.0)
    dims = points.shape[-1]
    base = np.minimum(np.floor(points * resolution), resolution - 1).astype(np.int64)
    side = resolution + 1
    strides = side**np.arange(dims - 1, -1, -1)
    #
    keys = [(base + offset) @ strides for offset in corner_offsets(dims)]
    keys = np.unique(np.concatenate(keys))
    #
    vertices = np.empty((keys.size, dims), dtype=np.int64)
    for axis, stride in enumerate(strides):
        vertices[:, axis] = (keys // stride) % side
    return vertices


def slot_collisions(vertices, table_size):
    r"""
    Number of distinct vertices minus the number of occupied slots
    """
    if vertices.shape[0] == 0:
        return 0
    slots = hash_vertex(vertices, table_size)
    return int(vertices.shape[0] - np.unique(slots).size)


def count_collisions(config, points, resolution=None):
    r"""
    Counts collisions at one level resolution.

    Parameters
    ----------
    config : HashGridConfig
        dims 3 counts a 3-D hash grid, dims 2 a tri-plane encoder whose
        planes each use the config's table size
    points : (M, 3) array
        normalized query points
    resolution : int, optional
        lattice resolution, the config's finest resolution by default
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != 3:
        raise ContractError('collision queries must be 3-d points')
    resolution = config.res_max if resolution is None else int(resolution)
    table_size = config.table_size
    #
    planes = OrderedDict()
    if config.dims == 3:
        label = 'hash3d'
        vertices = accessed_vertices(points, resolution)
        planes['volume'] = (vertices.shape[0], slot_collisions(vertices, table_size))
    else:
        label = 'trihash'
        for name, axes in PLANE_AXES.items():
            vertices = accessed_vertices(points[:, axes], resolution)
            planes[name] = (vertices.shape[0], slot_collisions(vertices, table_size))
    #
    distinct = sum(val[0] for val in planes.values())
    collisions = sum(val[1] for val in planes.values())
    return CollisionReport(label, resolution, table_size, distinct, collisions, planes)


def frontal_queries(R, N):
    r"""
    Query points of an orthographic frontal camera: one ray through every
    pixel center of an R x R image, N stratified depths without jitter
    """
    ticks = (np.arange(R) + 0.5) / R
    depths = (np.arange(N) + 0.5) / N
    grid_x, grid_y, grid_z = np.meshgrid(ticks, ticks, depths, indexing='ij')
    return np.stack([grid_x.ravel(), grid_y.ravel(), grid_z.ravel()], axis=1)


def encoder_configs(table_size_log2=DEFAULT_TABLE_LOG2, resolution=DEFAULT_RESOLUTION):
    r"""
    Single level configs of both encoders under an equal table budget
    """
    hash3d = HashGridConfig(1, 1, table_size_log2, resolution, resolution, dims=3)
    trihash = HashGridConfig(1, 1, table_size_log2, resolution, resolution, dims=2,
                             table_divisor=3)
    return OrderedDict([('hash3d', hash3d), ('trihash', trihash)])


#
########################################################################
#  Sweep
########################################################################


class SweepFit(namedtuple('SweepFit', ['slope', 'intercept', 'r_squared', 'degenerate'])):
    r"""Least squares line fit, degenerate when the series is constant"""
    __slots__ = ()


def fit_line(x_vals, y_vals):
    r"""
    Fits y = m x + b with scipy, flagging constant series instead of
    failing
    """
    x_vals = np.asarray(x_vals, dtype=float)
    y_vals = np.asarray(y_vals, dtype=float)
    if x_vals.size < 2 or np.ptp(x_vals) == 0.0 or np.ptp(y_vals) == 0.0:
        intercept = float(y_vals.mean()) if y_vals.size else 0.0
        return SweepFit(0.0, intercept, 0.0, True)
    m, b, r_val = sp_stats.linregress(x_vals, y_vals)[0:3]
    return SweepFit(float(m), float(b), float(r_val**2), False)


def complexity_sweep(R_values, N_values, resolution=DEFAULT_RESOLUTION,
                     table_size_log2=DEFAULT_TABLE_LOG2, num_workers=1):
    r"""
    Counts collisions of both encoders on frontal query sets for every
    (R, N) combination.

    Returns
    -------
    rows : list of dicts with keys R, N and one CollisionReport per encoder
    summary : OrderedDict of fitted slopes, ratios and the R exponent
    """
    configs = encoder_configs(table_size_log2, resolution)
    jobs = [(int(R), int(N)) for R in R_values for N in N_values]
    #
    def run_job(job):
        R, N = job
        points = frontal_queries(R, N)
        reports = OrderedDict((name, count_collisions(cfg, points, resolution))
                              for name, cfg in configs.items())
        logger.debug('R=%d N=%d: %s', R, N,
                     ', '.join('{}={:d}'.format(key, rep.collisions)
                               for key, rep in reports.items()))
        return OrderedDict([('R', R), ('N', N), ('reports', reports)])
    #
    rows = ordered_map(run_job, jobs, num_workers)
    return rows, summarize_sweep(rows)


def summarize_sweep(rows):
    r"""
    Fits collisions against N for every R and log collisions against log R
    for every N. Degenerate fits are logged as warnings.
    """
    summary = OrderedDict(slopes=OrderedDict(), ratios=OrderedDict(),
                          exponents=OrderedDict(), degenerate=[])
    R_values = sorted(set(row['R'] for row in rows))
    N_values = sorted(set(row['N'] for row in rows))
    #
    for R in R_values:
        series = [row for row in rows if row['R'] == R]
        entry = OrderedDict()
        for name in ('hash3d', 'trihash'):
            fit = fit_line([row['N'] for row in series],
                           [row['reports'][name].collisions for row in series])
            entry[name] = fit.slope
            if fit.degenerate:
                summary['degenerate'].append('slope {} R={:d}'.format(name, R))
        entry['ratio'] = _safe_ratio(entry['hash3d'], entry['trihash'])
        summary['slopes'][R] = entry
        #
        for row in series:
            totals = [row['reports'][name].collisions for name in ('hash3d', 'trihash')]
            summary['ratios']['R={:d},N={:d}'.format(R, row['N'])] = _safe_ratio(*totals)
    #
    for N in N_values:
        series = [row for row in rows if row['N'] == N]
        counts = np.array([row['reports']['hash3d'].collisions for row in series], dtype=float)
        if np.any(counts <= 0):
            summary['degenerate'].append('exponent N={:d}'.format(N))
            continue
        fit = fit_line(np.log([row['R'] for row in series]), np.log(counts))
        if fit.degenerate:
            summary['degenerate'].append('exponent N={:d}'.format(N))
            continue
        summary['exponents'][N] = fit.slope
    #
    for label in summary['degenerate']:
        logger.warning('degenerate sweep fit: %s', label)
    return summary


def _safe_ratio(num, den):
    r"""returns num / den or None when den is zero"""
    return float(num) / float(den) if den else None


def write_sweep_csv(rows, filename, overwrite=False):
    r"""
    Writes the sweep rows as CSV with one line per encoder plane and a
    total line per encoder
    """
    check_overwrite(filename, overwrite)
    #
    content = [','.join(CSV_COLUMNS)]
    for row in rows:
        for report in row['reports'].values():
            content.extend(report.csv_rows(row['R'], row['N']))
    #
    with open(filename, 'w') as outfile:
        outfile.write('\n'.join(content) + '\n')
    logger.info('collision table saved as: %s', filename)


def write_sweep_summary(summary, filename, overwrite=False):
    r"""
    Writes the fitted slopes, ratios and exponents as YAML
    """
    check_overwrite(filename, overwrite)
    #
    def plain(value):
        if isinstance(value, dict):
            return {key: plain(val) for key, val in value.items()}
        if isinstance(value, list):
            return [plain(val) for val in value]
        return value
    #
    with open(filename, 'w') as outfile:
        yaml.safe_dump(plain(summary), outfile, default_flow_style=False)
    logger.info('collision summary saved as: %s', filename)
