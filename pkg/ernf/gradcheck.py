"""
================================================================================
Gradient Checks
================================================================================
| Compares every hand written adjoint against central finite differences.
|
| Each check builds a small random instance, contracts the forward outputs
| with a fixed random upstream gradient into a scalar and perturbs a random
| subset of parameter and input entries by +/- FD_STEP. A perturbation that
| changes a discrete decision of the forward tape (a lattice cell, a relu
| pattern, a clamp) straddles a kink; such entries are redrawn.

"""
from collections import namedtuple, OrderedDict
import numpy as np
from scipy.spatial.transform import Rotation
from .encoding.hash_grid import HashGrid, HashGridConfig
from .encoding.tri_plane import build_encoder
from .ernf_core import _get_logger, ContractError, make_rng, ordered_map
from .networks.dense import DenseStack, SIGMOID_SATURATION
from .networks.head_field import HeadField
from .networks.region_attention import AUDIO_DIM, RegionAttention
from .networks.torso_field import KeyPoints, TorsoField
from .render import composite_backward, composite_batch

# module globals
logger = _get_logger(__name__)
FD_STEP = 1e-4
TOLERANCE = 1e-4
REL_FLOOR = 1e-4
MAX_ENTRIES = 64
KINK_RETRIES = 8
BATCH = 4


class GradCase(namedtuple('GradCase', ['arrays', 'evaluate', 'gradients'])):
    r"""
    One random check instance.

    arrays : OrderedDict of name -> live array perturbed in place
    evaluate : callable returning (loss, tape state)
    gradients : callable returning name -> analytic gradient
    """
    __slots__ = ()


class GradcheckResult(namedtuple('GradcheckResult', ['module', 'max_rel_error', 'instances',
                                                     'entries', 'kinks'])):
    r"""summary of one module's checks"""
    __slots__ = ()

    @property
    def passed(self):
        return self.max_rel_error <= TOLERANCE

    def to_dict(self):
        return OrderedDict([('module', self.module),
                            ('max_rel_error', float(self.max_rel_error)),
                            ('instances', self.instances),
                            ('entries', self.entries),
                            ('kinks', self.kinks),
                            ('passed', bool(self.passed))])


PoseArrays = namedtuple('PoseArrays', ['R', 't'])


#
########################################################################
#  Tape inspection
########################################################################


def tape_state(tape):
    r"""
    Collects the discrete decisions of a forward tape: integer and boolean
    arrays (lattice slots, clamp masks) and the sign and saturation pattern
    of the pre-activation in every (input, pre-activation, output) layer
    record.
    """
    states = []

    def visit(item):
        if isinstance(item, dict):
            for key in sorted(item, key=str):
                visit(item[key])
        elif isinstance(item, list):
            for entry in item:
                visit(entry)
        elif isinstance(item, tuple):
            if len(item) == 3 and all(isinstance(arr, np.ndarray) and arr.dtype.kind == 'f'
                                      for arr in item):
                states.append(item[1] > 0.0)
                states.append(np.abs(item[1]) < SIGMOID_SATURATION)
            else:
                for entry in item:
                    visit(entry)
        elif isinstance(item, np.ndarray) and item.dtype.kind in 'biu':
            states.append(item)
    #
    visit(tape)
    return states


def same_state(first, second):
    return len(first) == len(second) and all(np.array_equal(a, b)
                                             for a, b in zip(first, second))


def relative_error(analytic, numeric):
    r"""|a - n| / max(|a|, |n|, REL_FLOOR)"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def _contract(upstream, outputs):
    return float(sum(np.sum(u * o) for u, o in zip(upstream, outputs)))


def _pick_entries(array, analytic, count, rng):
    r"""half of the picks favor entries with a non-zero analytic gradient"""
    count = min(count, array.size)
    touched = np.flatnonzero(analytic)
    picks = []
    if touched.size:
        picks.extend(rng.choice(touched, size=min(touched.size, (count + 1) // 2),
                                replace=False))
    picks.extend(rng.integers(0, array.size, count - len(picks)))
    return [int(val) for val in picks]


def check_case(case, rng, max_entries=MAX_ENTRIES, step=FD_STEP):
    r"""
    Finite difference check of one instance.

    Returns
    -------
    max relative error, number of entries compared, number of kinks redrawn
    """
    _, base_state = case.evaluate()
    analytic = case.gradients()
    per_array = max(1, max_entries // len(case.arrays))
    worst, compared, kinks = 0.0, 0, 0
    for name, array in case.arrays.items():
        grad = np.asarray(analytic[name], dtype=float)
        if grad.shape != array.shape:
            msg = 'gradient of {} has shape {}, expected {}'
            raise ContractError(msg.format(name, grad.shape, array.shape))
        flat = array.reshape(-1)
        for index in _pick_entries(array, grad, per_array, rng):
            for _ in range(KINK_RETRIES):
                original = flat[index]
                flat[index] = original + step
                loss_plus, state_plus = case.evaluate()
                flat[index] = original - step
                loss_minus, state_minus = case.evaluate()
                flat[index] = original
                if same_state(state_plus, base_state) and same_state(state_minus, base_state):
                    break
                kinks += 1
                index = int(rng.integers(0, array.size))
            else:
                continue
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            worst = max(worst, relative_error(grad.reshape(-1)[index], numeric))
            compared += 1
    return worst, compared, kinks


#
########################################################################
#  Check instances
########################################################################


def _small_grid(dims, rng):
    config = HashGridConfig(levels=3, features=2, table_size_log2=6, res_min=4,
                            res_max=16, dims=dims)
    grid = HashGrid(config, rng)
    grid.tables[...] = rng.uniform(-1.0, 1.0, grid.tables.shape)
    return grid


def _hash_case(dims, rng):
    grid = _small_grid(dims, rng)
    u = rng.uniform(0.05, 0.95, (BATCH, dims))
    upstream = rng.normal(size=(BATCH, grid.output_dim))

    def evaluate():
        features, cache = grid.encode(u)
        return _contract([upstream], [features]), tape_state(cache)

    def gradients():
        _, cache = grid.encode(u)
        grads, du = grid.encode_backward(cache, upstream)
        return {'tables': grads['tables'], 'u': du}
    #
    return GradCase(OrderedDict([('tables', grid.tables), ('u', u)]), evaluate, gradients)


def hash2d_case(rng, instance=0):
    return _hash_case(2, rng)


def hash3d_case(rng, instance=0):
    return _hash_case(3, rng)


def _randomized_encoder(backbone, rng):
    encoder = build_encoder(backbone, levels=3, features=2, table_size_log2=6, res_min=4,
                            res_max=16, rng=rng)
    for table in encoder.parameters().values():
        table[...] = rng.uniform(-1.0, 1.0, table.shape)
    return encoder


def triplane_case(rng, instance=0):
    encoder = _randomized_encoder('trihash', rng)
    x = rng.uniform(0.05, 0.95, (BATCH, 3))
    upstream = rng.normal(size=(BATCH, encoder.output_dim))

    def evaluate():
        features, cache = encoder.encode(x)
        return _contract([upstream], [features]), tape_state(cache)

    def gradients():
        _, cache = encoder.encode(x)
        grads, dx = encoder.encode_backward(cache, upstream)
        return dict(grads, x=dx)
    #
    arrays = encoder.parameters()
    arrays['x'] = x
    return GradCase(arrays, evaluate, gradients)


def attention_case(rng, instance=0):
    r"""alternates channel and feature attention between instances"""
    mode = ('channel', 'feature')[instance % 2]
    attn = RegionAttention(12, mode, audio_hidden=8, eye_hidden=4, rng=rng)
    for param in attn.parameters().values():
        param[...] = rng.normal(scale=0.5, size=param.shape)
    f_x = rng.normal(size=(BATCH, 12))
    a = rng.normal(size=(BATCH, AUDIO_DIM))
    e = rng.uniform(0.1, 0.9, (BATCH, 1))
    up_a = rng.normal(size=(BATCH, AUDIO_DIM))
    up_e = rng.normal(size=(BATCH, 1))

    def evaluate():
        a_r, e_r, cache = attn.forward(f_x, a, e)
        return _contract([up_a, up_e], [a_r, e_r]), tape_state(cache)

    def gradients():
        _, _, cache = attn.forward(f_x, a, e)
        grads, df_x, da, de = attn.backward(cache, up_a, up_e)
        return dict(grads, f_x=df_x, a=da, e=de)
    #
    arrays = attn.parameters()
    arrays.update(f_x=f_x, a=a, e=e)
    return GradCase(arrays, evaluate, gradients)


def _dense_case(dims, activations, rng):
    stack = DenseStack(dims, activations, rng)
    x = rng.normal(size=(BATCH, dims[0]))
    upstream = rng.normal(size=(BATCH, dims[-1]))

    def evaluate():
        y, cache = stack.forward(x)
        return _contract([upstream], [y]), tape_state(cache)

    def gradients():
        _, cache = stack.forward(x)
        grads, dx = stack.backward(cache, upstream)
        return dict(grads, x=dx)
    #
    arrays = stack.parameters()
    arrays['x'] = x
    return GradCase(arrays, evaluate, gradients)


def head_mlp_case(rng, instance=0):
    r"""density network on even instances, color network on odd ones"""
    if instance % 2 == 0:
        return _dense_case([12 + AUDIO_DIM + 1, 16, 16, 9], ['relu', 'relu', 'none'], rng)
    return _dense_case([8 + 27, 16, 3], ['relu', 'sigmoid'], rng)


def torso_mlp_case(rng, instance=0):
    r"""deformation network on even instances, output network on odd ones"""
    if instance % 2 == 0:
        return _dense_case([8, 16, 2], ['relu', 'none'], rng)
    return _dense_case([6, 16, 4], ['relu', 'sigmoid'], rng)


def head_field_case(rng, instance=0):
    r"""complete head field including the encoder and attention"""
    backbone = ('trihash', 'hash3d')[instance % 2]
    field = HeadField(_randomized_encoder(backbone, rng), 'channel', hidden_dim=16,
                      latent_dim=8, audio_hidden=8, eye_hidden=4, rng=rng)
    x = rng.uniform(0.05, 0.95, (BATCH, 3))
    d = rng.normal(size=(BATCH, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    a = rng.normal(size=(BATCH, AUDIO_DIM))
    e = rng.uniform(0.1, 0.9, BATCH)
    up_rgb = rng.normal(size=(BATCH, 3))
    up_sigma = rng.normal(size=BATCH)

    def evaluate():
        rgb, sigma, cache = field.forward(x, d, a, e)
        return _contract([up_rgb, up_sigma], [rgb, sigma]), tape_state(cache)

    def gradients():
        _, _, cache = field.forward(x, d, a, e)
        grads, dx = field.backward(cache, up_rgb, up_sigma)
        return dict(grads, x=dx)
    #
    arrays = field.parameters()
    arrays['x'] = x
    return GradCase(arrays, evaluate, gradients)


def _random_camera_pose(rng):
    r"""camera-to-canonical pose looking at the origin from about 2.5 units"""
    rotation = Rotation.from_euler('yxz', rng.uniform(-20.0, 20.0, 3),
                                   degrees=True).as_matrix()
    placement_R = rotation @ np.diag([-1.0, -1.0, 1.0])
    placement_t = np.array([0.0, 0.0, 2.5]) + rng.uniform(-0.1, 0.1, 3)
    return PoseArrays(placement_R.T.copy(), -placement_R.T @ placement_t)


def ape_case(rng, instance=0):
    r"""adaptive pose encoding with respect to key points, gamma and pose"""
    keys = KeyPoints(rng.uniform(-0.6, 0.6, (3, 3)), gamma=rng.uniform(0.5, 1.5))
    pose = _random_camera_pose(rng)
    upstream = rng.normal(size=(2, keys.num_keys))

    def evaluate():
        xbar, _ = keys.project(pose)
        return _contract([upstream], [xbar]), []

    def gradients():
        _, cache = keys.project(pose)
        grads, (d_R, d_t) = keys.project_backward(cache, upstream)
        return dict(grads, pose_R=d_R, pose_t=d_t)
    #
    arrays = keys.parameters()
    arrays.update(pose_R=pose.R, pose_t=pose.t)
    return GradCase(arrays, evaluate, gradients)


def torso_field_case(rng, instance=0):
    r"""complete torso field driven through the key point projection"""
    config = HashGridConfig(levels=3, features=2, table_size_log2=6, res_min=4,
                            res_max=16, dims=2)
    torso = TorsoField(config, hidden_dim=16, rng=rng)
    torso.tex_grid.tables[...] = rng.uniform(-1.0, 1.0, torso.tex_grid.tables.shape)
    pose = _random_camera_pose(rng)
    x_pixel = rng.uniform(0.1, 0.9, (BATCH, 2))
    up_rgb = rng.normal(size=(BATCH, 3))
    up_alpha = rng.normal(size=BATCH)

    def evaluate():
        rgb, alpha, cache = torso.forward_pose(x_pixel, pose)
        return _contract([up_rgb, up_alpha], [rgb, alpha]), tape_state(cache)

    def gradients():
        _, _, cache = torso.forward_pose(x_pixel, pose)
        return torso.backward_pose(cache, up_rgb, up_alpha)
    #
    return GradCase(torso.parameters(), evaluate, gradients)


def compositor_case(rng, instance=0):
    num_samples = 8
    rgb = rng.uniform(0.0, 1.0, (BATCH, num_samples, 3))
    sigma = rng.uniform(0.0, 3.0, (BATCH, num_samples))
    delta = rng.uniform(0.01, 0.3, (BATCH, num_samples))
    background = rng.uniform(0.0, 1.0, 3)
    up_color = rng.normal(size=(BATCH, 3))
    up_opacity = rng.normal(size=BATCH)

    def evaluate():
        color, opacity, _, _ = composite_batch(rgb, sigma, delta, background)
        return _contract([up_color, up_opacity], [color, opacity]), []

    def gradients():
        _, _, _, cache = composite_batch(rgb, sigma, delta, background)
        d_rgb, d_sigma, d_bg = composite_backward(cache, up_color, up_opacity)
        return {'rgb': d_rgb, 'sigma': d_sigma, 'background': d_bg.sum(axis=0)}
    #
    arrays = OrderedDict([('rgb', rgb), ('sigma', sigma), ('background', background)])
    return GradCase(arrays, evaluate, gradients)


CASES = OrderedDict([
    ('hash2d', hash2d_case),
    ('hash3d', hash3d_case),
    ('triplane', triplane_case),
    ('attention', attention_case),
    ('head_mlp', head_mlp_case),
    ('head_field', head_field_case),
    ('torso_mlp', torso_mlp_case),
    ('ape', ape_case),
    ('torso_field', torso_field_case),
    ('compositor', compositor_case),
])


#
########################################################################
#  Driver
########################################################################


def gradcheck_module(name, seed=0, instances=100, num_workers=1):
    r"""
    Runs the finite difference check of one module over random instances

    Returns
    -------
    GradcheckResult
    """
    if name not in CASES:
        msg = 'unknown gradcheck module {}, expected one of {}'
        raise ContractError(msg.format(name, ', '.join(CASES)))
    builder = CASES[name]
    stream = list(CASES).index(name)

    def run_instance(instance):
        rng = make_rng(seed, stream, instance)
        return check_case(builder(rng, instance), rng)
    #
    results = ordered_map(run_instance, range(instances), num_workers)
    worst = max((res[0] for res in results), default=0.0)
    result = GradcheckResult(name, worst, instances, sum(res[1] for res in results),
                             sum(res[2] for res in results))
    logger.debug('%s: max relative error %.3e over %d entries (%d kinks redrawn)',
                 name, result.max_rel_error, result.entries, result.kinks)
    return result


def run_gradchecks(module='all', seed=0, instances=100, num_workers=1):
    r"""
    Runs one module or all of them.

    Returns
    -------
    list of GradcheckResult
    """
    names = list(CASES) if module == 'all' else [module]
    return [gradcheck_module(name, seed, instances, num_workers) for name in names]
