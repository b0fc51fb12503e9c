"""
================================================================================
Trainer
================================================================================
| Coarse-to-fine optimization of the head field followed by separate
| optimization of the torso field.
|
| Head training runs a coarse stage on random rays drawn from all training
| frames and a fine stage on random image patches with the perceptual term.
| Ray batches are split into fixed chunks that are rendered and back
| propagated independently, the chunk gradients are summed in chunk order.
| The occupancy grid is refreshed every few steps from the current density.
|
| Torso training keeps the head fixed and composites the torso over the
| ground truth head-only frames.

"""
from collections import OrderedDict
import json
import os
import time
import numpy as np
from ..checkpoint import load_checkpoint, restore_fields, save_checkpoint
from ..ernf_core import (_get_logger, ContractError, DegeneratePoseError, TrainingAbort,
                         check_overwrite, chunk_slices, get_num_workers, make_rng,
                         ordered_map, reduce_grads)
from ..geom import camera_rays, psnr
from ..render import WHITE, composite_torso, render_head_image, render_rays, \
    render_rays_backward, normalized_pixels
from .config import SEED_STREAMS
from .losses import PerceptualMetric, coarse_loss, coarse_loss_grad, fine_loss, \
    fine_loss_grad
from .optimizer import AdamW

# module globals
logger = _get_logger(__name__)
HEAD_CKPT = 'head.ckpt'
FULL_CKPT = 'full.ckpt'
TREND_FRACTION = 0.1


class MetricsLog(object):
    r"""
    JSON lines metrics writer, one record per logged iteration with the keys
    iter, stage, loss, psnr_val and wall_ms. wall_ms is null in
    deterministic mode so reruns produce identical files.
    """
    def __init__(self, filename, deterministic=False, overwrite=False):
        super().__init__()
        check_overwrite(filename, overwrite)
        self.filename = filename
        self.deterministic = deterministic
        self.records = []
        self._start = time.perf_counter()
        open(filename, 'w').close()

    def record(self, iteration, stage, loss, psnr_val=None):
        wall_ms = None
        if not self.deterministic:
            wall_ms = round(1000.0 * (time.perf_counter() - self._start), 3)
        entry = OrderedDict([('iter', int(iteration)),
                             ('stage', stage),
                             ('loss', float(loss)),
                             ('psnr_val', None if psnr_val is None else float(psnr_val)),
                             ('wall_ms', wall_ms)])
        self.records.append(entry)
        with open(self.filename, 'a') as outfile:
            outfile.write(json.dumps(entry) + '\n')
        return entry

    def losses(self, stage):
        return [entry['loss'] for entry in self.records if entry['stage'] == stage]


class RayTable(object):
    r"""
    Flattened rays, targets and conditions of a list of frames.

    Parameters
    ----------
    dataset : Dataset
    frames : list of Frame
    head : bool
        use the head-only images as targets
    """
    def __init__(self, dataset, frames, head=True):
        super().__init__()
        cam = dataset.intrinsics
        self.frames = list(frames)
        self.height, self.width = cam.height, cam.width
        pixels = cam.pixel_centers().reshape(-1, 2)
        origins, directions, targets = [], [], []
        for frame in self.frames:
            orig, dirs = camera_rays(cam, frame.camera_pose, pixels)
            origins.append(orig)
            directions.append(dirs)
            targets.append(dataset.image(frame, head=head).reshape(-1, 3))
        self.origins = np.concatenate(origins)
        self.directions = np.concatenate(directions)
        self.targets = np.concatenate(targets)
        self.audio = np.stack([frame.audio for frame in self.frames])
        self.eye = np.array([frame.eye for frame in self.frames])

    @property
    def rays_per_frame(self):
        return self.height * self.width

    def gather(self, index):
        r"""returns origins, directions, targets, audio and eye for ray indices"""
        frame = index // self.rays_per_frame
        return (self.origins[index], self.directions[index], self.targets[index],
                self.audio[frame], self.eye[frame])

    def random_rays(self, count, rng):
        return self.gather(rng.integers(0, self.targets.shape[0], count))

    def random_patch(self, size, rng):
        r"""returns the ray indices of a size x size patch of a random frame"""
        size_y, size_x = min(size, self.height), min(size, self.width)
        frame = rng.integers(0, len(self.frames))
        top = rng.integers(0, self.height - size_y + 1)
        left = rng.integers(0, self.width - size_x + 1)
        rows, cols = np.meshgrid(np.arange(top, top + size_y),
                                 np.arange(left, left + size_x), indexing='ij')
        index = frame * self.rays_per_frame + rows * self.width + cols
        return self.gather(index.ravel()), (size_y, size_x)


#
########################################################################
#  Head training
########################################################################


def _forward_chunks(field, batch, train, occupancy, aabb, seed, iteration, num_workers):
    r"""renders a ray batch chunk by chunk, returns colors and the caches"""
    origins, directions, _, audio, eye = batch
    chunks = chunk_slices(origins.shape[0], train.grad_chunk)
    #
    def render_chunk(job):
        index, chunk = job
        rng = make_rng(seed, SEED_STREAMS['jitter'], iteration, index)
        color, _, cache = render_rays(field, origins[chunk], directions[chunk], audio[chunk],
                                      eye[chunk], aabb, occupancy, train.num_samples, WHITE,
                                      rng)
        return color, cache
    #
    results = ordered_map(render_chunk, list(enumerate(chunks)), num_workers)
    color = np.concatenate([res[0] for res in results])
    return color, chunks, [res[1] for res in results]


def _backward_chunks(field, chunks, caches, d_color, num_workers):
    r"""back propagates per chunk and sums the gradients in chunk order"""
    def backward_chunk(job):
        chunk, cache = job
        return render_rays_backward(field, cache, d_color[chunk])
    #
    return reduce_grads(ordered_map(backward_chunk, list(zip(chunks, caches)), num_workers))


def _update_occupancy(field, occupancy, rays, train, seed, step):
    if occupancy is None or not occupancy.should_update(step):
        return
    rng = make_rng(seed, SEED_STREAMS['occupancy'], step)
    count = min(train.occupancy_conditions, len(rays.frames))
    picks = rng.choice(len(rays.frames), size=count, replace=False)
    conditions = [(rays.audio[idx], rays.eye[idx]) for idx in sorted(picks)]
    occupancy.update(lambda points, cond: field.density(points, cond[0], cond[1]),
                     conditions, rng)


def validation_psnr(field, dataset, frames, train, occupancy=None, num_workers=1,
                    torso=None):
    r"""
    Mean PSNR of the rendered head (or head plus torso) against the ground
    truth of the given frames
    """
    values = []
    for frame in frames:
        rgb, _ = render_head_image(field, dataset.intrinsics, frame.camera_pose, frame.audio,
                                   frame.eye, dataset.aabb, occupancy, train.num_samples,
                                   WHITE, num_workers=num_workers)
        target = dataset.image(frame, head=torso is None)
        if torso is not None:
            torso_rgb, alpha = torso.forward_pose(normalized_pixels(dataset.intrinsics),
                                                  frame.camera_pose)[:2]
            shape = (dataset.intrinsics.height, dataset.intrinsics.width)
            rgb = composite_torso(rgb, torso_rgb.reshape(shape + (3,)), alpha.reshape(shape))
        values.append(psnr(rgb, target))
    return float(np.mean(values)) if values else None


def trend_ok(losses, fraction=TREND_FRACTION):
    r"""
    True when the median of the last fraction of the losses is below the
    median of the first fraction
    """
    if len(losses) < 2:
        return True
    count = max(1, int(len(losses) * fraction))
    return bool(np.median(losses[-count:]) < np.median(losses[:count]))


def _head_meta(config, dataset, iterations):
    return {'kind': 'head',
            'profile': config.profile,
            'model': config.model.to_dict(),
            'train': config.train.to_dict(),
            'seed': config.train.seed,
            'iterations': iterations,
            'intrinsics': dict(dataset.intrinsics._asdict()),
            'aabb': [dataset.aabb.min.tolist(), dataset.aabb.max.tolist()]}


def train_head(dataset, config, out_dir, deterministic=False, overwrite=False):
    r"""
    Trains the head field on the training frames of a dataset.

    Parameters
    ----------
    dataset : Dataset
    config : RunConfig
    out_dir : str
        receives head.ckpt and metrics_head.jsonl

    Returns
    -------
    checkpoint path, MetricsLog
    """
    train = config.train
    seed = train.seed
    num_workers = get_num_workers(deterministic)
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, HEAD_CKPT)
    check_overwrite(ckpt_path, overwrite)
    metrics = MetricsLog(os.path.join(out_dir, 'metrics_head.jsonl'), deterministic, overwrite)
    #
    field = config.model.build_head_field(seed)
    occupancy = train.build_occupancy(dataset.aabb)
    optimizer = AdamW(field.parameters(), field.parameter_groups(),
                      {'grid': train.lr_grid, 'mlp': train.lr_mlp},
                      (train.beta1, train.beta2), train.eps, train.weight_decay)
    rays = RayTable(dataset, dataset.train_frames, head=True)
    if not rays.frames:
        raise ContractError('dataset has no training frames')
    val_frames = dataset.val_frames[:train.val_frames]
    batch_rng = make_rng(seed, SEED_STREAMS['batches'])
    metric = PerceptualMetric()
    logger.info('training head field with %d parameters on %d frames',
                field.num_parameters(), len(rays.frames))
    #
    schedule = [('coarse', train.coarse_iters), ('fine', train.fine_iters)]
    step = 0
    for stage, num_iters in schedule:
        for iteration in range(num_iters):
            _update_occupancy(field, occupancy, rays, train, seed, step)
            if stage == 'coarse':
                batch = rays.random_rays(train.rays_per_batch, batch_rng)
                color, chunks, caches = _forward_chunks(field, batch, train, occupancy,
                                                        dataset.aabb, seed, step, num_workers)
                loss = coarse_loss(color, batch[2])
                d_color = coarse_loss_grad(color, batch[2])
                count = color.shape[0]
            else:
                batch, shape = rays.random_patch(train.patch_size, batch_rng)
                color, chunks, caches = _forward_chunks(field, batch, train, occupancy,
                                                        dataset.aabb, seed, step, num_workers)
                pred = color.reshape(shape + (3,))
                target = batch[2].reshape(shape + (3,))
                loss = fine_loss(pred, target, train.perceptual_weight, metric)
                d_color = fine_loss_grad(pred, target, train.perceptual_weight,
                                         metric).reshape(-1, 3)
                count = color.shape[0]
            #
            if not np.isfinite(loss):
                raise TrainingAbort(stage, iteration, loss)
            grads = _backward_chunks(field, chunks, caches, d_color, num_workers)
            optimizer.step(grads)
            step += 1
            #
            psnr_val = None
            last = iteration == num_iters - 1
            if val_frames and ((iteration + 1) % train.val_interval == 0 or last):
                psnr_val = validation_psnr(field, dataset, val_frames, train, occupancy,
                                           num_workers)
            if (iteration + 1) % train.log_interval == 0 or psnr_val is not None or last:
                logger.info('%s iteration %d: loss %.6f, validation psnr %s', stage,
                            iteration + 1, loss / count,
                            'n/a' if psnr_val is None else '{:.2f}'.format(psnr_val))
            metrics.record(iteration, stage, loss / count, psnr_val)
        #
        if num_iters and not trend_ok(metrics.losses(stage)):
            logger.warning('%s stage loss did not decrease over the run', stage)
    #
    iterations = {'coarse': train.coarse_iters, 'fine': train.fine_iters}
    save_checkpoint(ckpt_path, _head_meta(config, dataset, iterations),
                    OrderedDict([('head', field)]), occupancy, overwrite)
    return ckpt_path, metrics


#
########################################################################
#  Torso training
########################################################################


def _torso_step(torso, dataset, frame, train, rng):
    r"""returns loss and gradients of one frame's random pixel batch"""
    cam = dataset.intrinsics
    pixels = normalized_pixels(cam)
    index = rng.integers(0, pixels.shape[0], train.rays_per_batch)
    target = dataset.image(frame).reshape(-1, 3)[index]
    head = dataset.image(frame, head=True).reshape(-1, 3)[index]
    #
    rgb, alpha, cache = torso.forward_pose(pixels[index], frame.camera_pose)
    pred = composite_torso(head, rgb, alpha)
    loss = coarse_loss(pred, target)
    d_pred = coarse_loss_grad(pred, target)
    d_rgb = alpha[:, None] * d_pred
    d_alpha = np.sum(d_pred * (rgb - head), axis=1)
    grads = torso.backward_pose(cache, d_rgb, d_alpha)
    return loss, grads


def torso_validation_psnr(torso, dataset, frames):
    r"""PSNR of the torso composited over the ground truth head images"""
    values = []
    shape = (dataset.intrinsics.height, dataset.intrinsics.width)
    for frame in frames:
        try:
            rgb, alpha, _ = torso.forward_pose(normalized_pixels(dataset.intrinsics),
                                               frame.camera_pose)
        except DegeneratePoseError:
            continue
        image = composite_torso(dataset.image(frame, head=True), rgb.reshape(shape + (3,)),
                                alpha.reshape(shape))
        values.append(psnr(image, dataset.image(frame)))
    return float(np.mean(values)) if values else None


def train_torso(dataset, head_ckpt, config, out_dir, deterministic=False, overwrite=False):
    r"""
    Trains the torso field with the head checkpoint held fixed. Frames whose
    key points project degenerately are skipped with a warning.

    Returns
    -------
    checkpoint path holding head and torso, MetricsLog
    """
    train = config.train
    seed = train.seed
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, FULL_CKPT)
    check_overwrite(ckpt_path, overwrite)
    metrics = MetricsLog(os.path.join(out_dir, 'metrics_torso.jsonl'), deterministic,
                         overwrite)
    head_state = load_checkpoint(head_ckpt)
    head, _, occupancy = restore_fields(head_state)
    #
    torso = config.model.build_torso_field(seed)
    optimizer = AdamW(torso.parameters(), torso.parameter_groups(),
                      {'grid': train.lr_grid, 'mlp': train.lr_mlp},
                      (train.beta1, train.beta2), train.eps, train.weight_decay)
    frames = dataset.train_frames
    if not frames:
        raise ContractError('dataset has no training frames')
    val_frames = dataset.val_frames[:train.val_frames]
    rng = make_rng(seed, SEED_STREAMS['batches'], 1)
    skipped = set()
    logger.info('training torso field with %d parameters', torso.num_parameters())
    #
    for iteration in range(train.torso_iters):
        frame = frames[rng.integers(0, len(frames))]
        try:
            loss, grads = _torso_step(torso, dataset, frame, train, rng)
        except DegeneratePoseError as err:
            if frame.index not in skipped:
                logger.warning('skipping frame %d: %s', frame.index, err)
                skipped.add(frame.index)
            continue
        if not np.isfinite(loss):
            raise TrainingAbort('torso', iteration, loss)
        optimizer.step(grads)
        #
        psnr_val = None
        last = iteration == train.torso_iters - 1
        if val_frames and ((iteration + 1) % train.val_interval == 0 or last):
            psnr_val = torso_validation_psnr(torso, dataset, val_frames)
        if (iteration + 1) % train.log_interval == 0 or psnr_val is not None:
            logger.info('torso iteration %d: loss %.6f', iteration + 1,
                        loss / train.rays_per_batch)
        metrics.record(iteration, 'torso', loss / train.rays_per_batch, psnr_val)
    #
    if train.torso_iters and not trend_ok(metrics.losses('torso')):
        logger.warning('torso loss did not decrease over the run')
    meta = dict(head_state.meta)
    meta.pop('occupancy', None)
    meta.update(kind='full', torso_iterations=train.torso_iters,
                skipped_frames=sorted(int(idx) for idx in skipped))
    meta['model'] = dict(meta['model'], **{key: config.model[key] for key in
                                           config.model if key.startswith('torso_')})
    save_checkpoint(ckpt_path, meta, OrderedDict([('head', head), ('torso', torso)]),
                    occupancy, overwrite)
    return ckpt_path, metrics
