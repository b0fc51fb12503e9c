"""
================================================================================
Evaluation
================================================================================
| Quality measurements of trained fields against the synthetic ground
| truth: PSNR reports, the backbone and attention ablation grid, region
| attention localization, occupancy grid views and torso alignment.

"""
from collections import OrderedDict
import json
import os
import numpy as np
from scipy import ndimage
import yaml
from .checkpoint import load_checkpoint, restore_fields
from .encoding.tri_plane import BACKBONES
from .ernf_core import (_get_logger, CheckpointError, ContractError, DegeneratePoseError,
                        check_overwrite)
from .geom import FrameBuffer, normalize_to_unit_cube, psnr
from .networks.region_attention import ATTENTION_MODES
from .render import WHITE, normalized_pixels, render_frame, render_head_image
from .train.config import RunConfig
from .train.trainer import train_head

# module globals
logger = _get_logger(__name__)
ABLATION_COLUMNS = ('backbone', 'attention', 'seed', 'num_parameters', 'psnr_val',
                    'mouth_mse')
PSNR_MARGIN = 0.5


def _check_compatible(ckpt, dataset):
    intrinsics = ckpt.meta.get('intrinsics')
    if not intrinsics:
        return
    size = (intrinsics.get('width'), intrinsics.get('height'))
    if size != (dataset.intrinsics.width, dataset.intrinsics.height):
        msg = 'checkpoint was trained on {}x{} images, dataset holds {}x{}'
        raise CheckpointError(msg.format(size[0], size[1], dataset.intrinsics.width,
                                         dataset.intrinsics.height))


def _select_frames(dataset, split):
    if split == 'all':
        return list(dataset.frames)
    if split not in ('train', 'val'):
        raise ContractError('split must be train, val or all')
    return [frame for frame in dataset.frames if frame.split == split]


def evaluate(ckpt_path, dataset, split='val', num_workers=1):
    r"""
    Renders every frame of a split and compares it with the ground truth.
    Head-only checkpoints are compared with the head-only images.

    Returns
    -------
    OrderedDict report with per frame and mean PSNR
    """
    ckpt = load_checkpoint(ckpt_path)
    _check_compatible(ckpt, dataset)
    head, torso, occupancy = restore_fields(ckpt)
    num_samples = ckpt.meta.get('train', {}).get('num_samples', 16)
    #
    per_frame = []
    for frame in _select_frames(dataset, split):
        rendered = render_frame(head, dataset.intrinsics, frame.camera_pose,
                                (frame.audio, frame.eye), WHITE, torso, dataset.aabb,
                                occupancy, num_samples, num_workers=num_workers)
        value = psnr(rendered.rgb, dataset.image(frame, head=torso is None))
        per_frame.append(OrderedDict([('index', frame.index), ('psnr', value)]))
        logger.info('frame %d: psnr %.2f dB', frame.index, value)
    #
    mean = float(np.mean([entry['psnr'] for entry in per_frame])) if per_frame else None
    return OrderedDict([('checkpoint', ckpt_path),
                        ('dataset', dataset.root),
                        ('kind', ckpt.kind),
                        ('split', split),
                        ('frames', per_frame),
                        ('mean_psnr', mean)])


def write_report(report, filename, overwrite=False):
    r"""writes a report dict as indented JSON"""
    check_overwrite(filename, overwrite)
    with open(filename, 'w') as outfile:
        json.dump(report, outfile, indent=2)
        outfile.write('\n')
    logger.info('report saved as: %s', filename)


#
########################################################################
#  Ablation
########################################################################


def mouth_mse(rendered, target, mask):
    r"""mean squared error over the pixels of a boolean mask"""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float('nan')
    diff = np.asarray(rendered, dtype=float)[mask] - np.asarray(target, dtype=float)[mask]
    return float(np.mean(diff**2))


def _variant_config(config, backbone, attention, seed):
    model = dict(config.model.to_dict(), backbone=backbone, attention=attention,
                 equal_budget=True)
    train = dict(config.train.to_dict(), seed=seed)
    return RunConfig(config.profile, train=train, model=model, scene=config.scene.to_dict())


def ablation_study(dataset, config, seeds=(0, 1, 2, 3), out_dir='ablation',
                   backbones=BACKBONES, attentions=ATTENTION_MODES, deterministic=False,
                   overwrite=False):
    r"""
    Trains the head field for every backbone, attention mode and seed under
    an equal hash table budget and measures validation PSNR and the squared
    error inside the projected mouth region.

    Returns
    -------
    list of OrderedDict rows, summary OrderedDict
    """
    scene = dataset.scene()
    cam = dataset.intrinsics
    val_frames = dataset.val_frames
    rows = []
    for backbone in backbones:
        for attention in attentions:
            for seed in seeds:
                label = '{}_{}_s{:d}'.format(backbone, attention, seed)
                variant = _variant_config(config, backbone, attention, seed)
                ckpt_path, _ = train_head(dataset, variant, os.path.join(out_dir, label),
                                          deterministic, overwrite)
                head, _, occupancy = restore_fields(load_checkpoint(ckpt_path))
                psnrs, errors = [], []
                for frame in val_frames:
                    rgb, _ = render_head_image(head, cam, frame.camera_pose, frame.audio,
                                               frame.eye, dataset.aabb, occupancy,
                                               variant.train.num_samples)
                    target = dataset.image(frame, head=True)
                    psnrs.append(psnr(rgb, target))
                    errors.append(mouth_mse(rgb, target,
                                            scene.region_mask(cam, frame.camera_pose)))
                row = OrderedDict([('backbone', backbone), ('attention', attention),
                                   ('seed', seed), ('num_parameters', head.num_parameters()),
                                   ('psnr_val', float(np.mean(psnrs))),
                                   ('mouth_mse', float(np.nanmean(errors)))])
                logger.info('%s: psnr %.2f dB, mouth mse %.6f', label, row['psnr_val'],
                            row['mouth_mse'])
                rows.append(row)
    #
    return rows, summarize_ablation(rows)


def summarize_ablation(rows, best=('trihash', 'channel'), baseline=('hash3d', 'concat')):
    r"""
    Per seed comparison of the best variant against the baseline: PSNR no
    more than PSNR_MARGIN below and strictly lower mouth error.
    """
    table = {(row['backbone'], row['attention'], row['seed']): row for row in rows}
    seeds = sorted({row['seed'] for row in rows})
    comparisons = []
    for seed in seeds:
        ours, base = table.get(best + (seed,)), table.get(baseline + (seed,))
        if ours is None or base is None:
            continue
        psnr_ok = ours['psnr_val'] >= base['psnr_val'] - PSNR_MARGIN
        mouth_ok = ours['mouth_mse'] < base['mouth_mse']
        comparisons.append(OrderedDict([('seed', seed),
                                        ('psnr_delta', ours['psnr_val'] - base['psnr_val']),
                                        ('mouth_mse_delta',
                                         ours['mouth_mse'] - base['mouth_mse']),
                                        ('passed', bool(psnr_ok and mouth_ok))]))
    #
    means = OrderedDict()
    for row in rows:
        key = '{}_{}'.format(row['backbone'], row['attention'])
        means.setdefault(key, []).append(row['psnr_val'])
    return OrderedDict([('best', '_'.join(best)),
                        ('baseline', '_'.join(baseline)),
                        ('comparisons', comparisons),
                        ('seeds_passed', sum(entry['passed'] for entry in comparisons)),
                        ('mean_psnr', OrderedDict((key, float(np.mean(vals)))
                                                  for key, vals in means.items()))])


def write_ablation(rows, summary, out_dir, overwrite=False):
    r"""writes ablation.csv and ablation_summary.yaml into out_dir"""
    csv_file = os.path.join(out_dir, 'ablation.csv')
    yaml_file = os.path.join(out_dir, 'ablation_summary.yaml')
    check_overwrite(csv_file, overwrite)
    check_overwrite(yaml_file, overwrite)
    content = ','.join(ABLATION_COLUMNS) + '\n'
    for row in rows:
        content += ','.join(str(row[col]) for col in ABLATION_COLUMNS) + '\n'
    with open(csv_file, 'w') as outfile:
        outfile.write(content)
    #
    plain = json.loads(json.dumps(summary))
    with open(yaml_file, 'w') as outfile:
        yaml.safe_dump(plain, outfile, default_flow_style=False)
    logger.info('ablation results saved in: %s', out_dir)
    return csv_file, yaml_file


#
########################################################################
#  Diagnostics
########################################################################


def attention_localization(field, dataset, frames=None):
    r"""
    Compares the audio attention norm and the eye gate over oracle surface
    points inside and outside the mouth and eye regions.

    Returns
    -------
    OrderedDict with the four means and the two inside / outside ratios
    """
    scene = dataset.scene()
    frames = dataset.val_frames if frames is None else frames
    norms, gates, mouth, eyes = [], [], [], []
    for frame in frames:
        points = scene.surface_points(dataset.intrinsics, frame.camera_pose, frame.audio,
                                      frame.eye)
        if points.shape[0] == 0:
            continue
        unit, _ = normalize_to_unit_cube(points, dataset.aabb)
        result = field.attention_norms(unit)
        if result is None:
            raise ContractError('field has no region attention to localize')
        norms.append(result[0])
        gates.append(result[1])
        mouth.append(scene.in_mouth(points))
        eyes.append(scene.in_eyes(points))
    if not norms:
        raise ContractError('no surface points visible in the selected frames')
    #
    norms, gates = np.concatenate(norms), np.concatenate(gates)
    mouth, eyes = np.concatenate(mouth), np.concatenate(eyes)
    report = OrderedDict()
    report['audio_inside'] = float(np.mean(norms[mouth])) if mouth.any() else float('nan')
    report['audio_outside'] = float(np.mean(norms[~mouth]))
    report['eye_inside'] = float(np.mean(gates[eyes])) if eyes.any() else float('nan')
    report['eye_outside'] = float(np.mean(gates[~eyes]))
    report['audio_ratio'] = report['audio_inside'] / max(report['audio_outside'], 1e-12)
    report['eye_ratio'] = report['eye_inside'] / max(report['eye_outside'], 1e-12)
    return report


def occupancy_image(occupancy, axis=2):
    r"""
    Max projection of the occupancy bitmap along an axis, occupied columns
    are dark. The image rows follow the next axis after the projected one.
    """
    if axis not in (0, 1, 2):
        raise ContractError('projection axis must be 0, 1 or 2')
    projection = occupancy.occupied.any(axis=axis).T
    rgb = np.where(projection[..., None], 0.15, 1.0) * np.ones(3)
    return FrameBuffer(projection.shape[1], projection.shape[0], rgb)


def torso_alignment_error(torso, dataset, frames=None):
    r"""
    Mean distance in pixels between the centroids of the learned torso mask
    (alpha > 0.5) and the oracle torso mask
    """
    scene = dataset.scene()
    cam = dataset.intrinsics
    frames = dataset.val_frames if frames is None else frames
    errors = []
    for frame in frames:
        try:
            _, alpha, _ = torso.forward_pose(normalized_pixels(cam), frame.camera_pose)
        except DegeneratePoseError as err:
            logger.warning('skipping frame %d: %s', frame.index, err)
            continue
        learned = alpha.reshape(cam.height, cam.width) > 0.5
        oracle = scene.torso_mask(cam, frame.camera_pose)
        if not oracle.any():
            continue
        if not learned.any():
            logger.warning('frame %d: learned torso mask is empty', frame.index)
            errors.append(float('inf'))
            continue
        offset = (np.array(ndimage.center_of_mass(learned)) -
                  np.array(ndimage.center_of_mass(oracle)))
        errors.append(float(np.linalg.norm(offset)))
    return float(np.mean(errors)) if errors else float('nan')
