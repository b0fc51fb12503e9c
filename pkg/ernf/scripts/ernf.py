r"""
Description: Command line driver of the ernf package. Generates synthetic
datasets, trains the head and torso fields, renders frames, runs the hash
collision experiment, the gradient checks, evaluation and the ablation grid.

Exit codes: 0 on success, 1 on invalid input (arguments, configuration,
dataset or checkpoint), 2 on runtime failures.

For usage information run: ``ernf -h`` or ``ernf {command} -h``

|

"""
import argparse
from argparse import RawDescriptionHelpFormatter as RawDesc
import json
import os
import sys
import numpy as np
from ernf import _get_logger, set_main_logger_level, get_num_workers
from ernf import ContractError, DatasetError, CheckpointError
from ernf.checkpoint import load_checkpoint, restore_fields
from ernf.collisions import complexity_sweep, write_sweep_csv, write_sweep_summary
from ernf.encoding.tri_plane import BACKBONES
from ernf.evaluation import (ablation_study, evaluate, occupancy_image, write_ablation,
                             write_report)
from ernf.geom import Aabb, CameraIntrinsics
from ernf.gradcheck import CASES, TOLERANCE, run_gradchecks
from ernf.networks.region_attention import ATTENTION_MODES
from ernf.render import WHITE, render_frame
from ernf.scene import generate_default_dataset, head_placement, load_dataset
from ernf.train import load_config, train_head, train_torso
from ernf.train.config import PROFILES

#
# fetching logger
logger = _get_logger('ernf.scripts')


class UsageError(Exception):
    r"""
    Raised in place of argparse's exit on invalid arguments
    """
    pass


class ArgumentParser(argparse.ArgumentParser):
    r"""
    Argument parser reporting errors by exception so run can map them onto
    its exit codes
    """
    def error(self, message):
        raise UsageError(self.prog + ': ' + message)


def _int_list(text):
    try:
        return [int(val) for val in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError('expected comma separated integers: ' + text)


#
# setting up the argument parser
parser = ArgumentParser(description=__doc__, formatter_class=RawDesc)
subparsers = parser.add_subparsers(dest='command', title='Commands', metavar='{command}')
#
# arguments shared by every command
common = argparse.ArgumentParser(add_help=False)
common.add_argument('-v', '--verbose', action='store_true',
                    help='prints debug messages (default: %(default)s)')
common.add_argument('-f', '--force', action='store_true',
                    help='can overwrite existing files (default: %(default)s)')
common.add_argument('--config', default=None,
                    help='TOML run configuration file (default: %(default)s)')
common.add_argument('--profile', choices=list(PROFILES), default=None,
                    help='training scale profile, overrides the file (default: desk)')
common.add_argument('--seed', type=int, default=None,
                    help='base random seed, overrides the file (default: 0)')
common.add_argument('--deterministic', action='store_true',
                    help='forces a single worker (default: %(default)s)')
common.add_argument('--out', type=os.path.realpath, default=None,
                    help='output directory (default: command specific)')
#
# model options shared by the training commands
model_args = argparse.ArgumentParser(add_help=False)
model_args.add_argument('--iters-coarse', type=int, default=None,
                        help='coarse stage iterations (default: profile value)')
model_args.add_argument('--iters-fine', type=int, default=None,
                        help='fine stage iterations (default: profile value)')
model_args.add_argument('--backbone', choices=BACKBONES, default=None,
                        help='geometry encoder (default: trihash)')
model_args.add_argument('--attention', choices=ATTENTION_MODES, default=None,
                        help='condition attention mode (default: channel)')

gen = subparsers.add_parser('gen-data', parents=[common], formatter_class=RawDesc,
                            help='renders a synthetic dataset')
gen.add_argument('--frames', type=int, default=None,
                 help='number of frames (default: 60)')
gen.add_argument('--width', type=int, default=None, help='image width (default: 128)')
gen.add_argument('--height', type=int, default=None, help='image height (default: 128)')
gen.add_argument('--static-pose', action='store_true',
                 help='keeps the head pose fixed (default: %(default)s)')

train_h = subparsers.add_parser('train-head', parents=[common, model_args],
                                formatter_class=RawDesc, help='trains the head field')
train_h.add_argument('--data', type=os.path.realpath, required=True,
                     help='dataset directory')

train_t = subparsers.add_parser('train-torso', parents=[common], formatter_class=RawDesc,
                                help='trains the torso field against a head checkpoint')
train_t.add_argument('--data', type=os.path.realpath, required=True,
                     help='dataset directory')
train_t.add_argument('--head-ckpt', type=os.path.realpath, default=None,
                     help='head checkpoint (default: OUT/head.ckpt)')
train_t.add_argument('--iters-torso', type=int, default=None,
                     help='torso iterations (default: profile value)')

render = subparsers.add_parser('render', parents=[common], formatter_class=RawDesc,
                               help='renders frames of a checkpoint')
render.add_argument('--ckpt', required=True,
                    help='checkpoint file, "none" is rejected')
render.add_argument('--data', type=os.path.realpath, default=None,
                    help='dataset providing poses and conditions (default: rest pose)')
render.add_argument('--frame', type=int, nargs='+', default=[0],
                    help='dataset frame indices to render (default: %(default)s)')
render.add_argument('--supersample', type=int, default=1,
                    help='samples per pixel along each axis (default: %(default)s)')
render.add_argument('--format', choices=('ppm', 'png'), default='ppm',
                    help='image format (default: %(default)s)')
render.add_argument('--occupancy-out', type=os.path.realpath, default=None,
                    help='writes the occupancy projection as PNG (default: %(default)s)')

collide = subparsers.add_parser('collisions', parents=[common], formatter_class=RawDesc,
                                help='runs the hash collision experiment')
collide.add_argument('--R', type=_int_list, default=[256],
                     help='comma separated query grid sizes (default: 256)')
collide.add_argument('--N', type=_int_list, default=[16],
                     help='comma separated depth sample counts (default: 16)')
collide.add_argument('--resolution', type=int, default=512,
                     help='lattice resolution (default: %(default)s)')
collide.add_argument('--table-log2', type=int, default=14,
                     help='log2 of the 3-d table size (default: %(default)s)')

grad = subparsers.add_parser('gradcheck', parents=[common], formatter_class=RawDesc,
                             help='checks the adjoints against finite differences')
grad.add_argument('--module', choices=['all'] + list(CASES), default='all',
                  help='module to check (default: %(default)s)')
grad.add_argument('--instances', type=int, default=100,
                  help='random instances per module (default: %(default)s)')

evalp = subparsers.add_parser('eval', parents=[common], formatter_class=RawDesc,
                              help='reports PSNR of a checkpoint on a dataset')
evalp.add_argument('--ckpt', type=os.path.realpath, required=True,
                   help='checkpoint file')
evalp.add_argument('--data', type=os.path.realpath, required=True,
                   help='dataset directory')
evalp.add_argument('--split', choices=('val', 'train', 'all'), default='val',
                   help='frames to evaluate (default: %(default)s)')

ablate = subparsers.add_parser('ablation', parents=[common, model_args],
                               formatter_class=RawDesc,
                               help='trains the backbone and attention grid')
ablate.add_argument('--data', type=os.path.realpath, required=True,
                    help='dataset directory')
ablate.add_argument('--seeds', type=_int_list, default=[0, 1, 2, 3],
                    help='comma separated seeds (default: 0,1,2,3)')


#
########################################################################
#  Commands
########################################################################


def _config(namespace):
    r"""loads the configuration and applies command line overrides"""
    config = load_config(namespace.config, namespace.profile)
    if namespace.seed is not None:
        config.train.update(seed=namespace.seed)
    overrides = {'iters_coarse': ('train', 'coarse_iters'),
                 'iters_fine': ('train', 'fine_iters'),
                 'iters_torso': ('train', 'torso_iters'),
                 'backbone': ('model', 'backbone'),
                 'attention': ('model', 'attention'),
                 'frames': ('scene', 'frames'),
                 'width': ('scene', 'width'),
                 'height': ('scene', 'height')}
    for arg, (section, key) in overrides.items():
        value = getattr(namespace, arg, None)
        if value is not None:
            getattr(config, section).update({key: value})
    if getattr(namespace, 'static_pose', False):
        config.scene.update(pose_varying=False)
    return config


def _out_dir(namespace, default):
    out_dir = namespace.out or os.path.realpath(default)
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def gen_data(namespace):
    config = _config(namespace)
    out_dir = _out_dir(namespace, 'ernf-data')
    dataset = generate_default_dataset(out_dir, config.scene, config.train.seed,
                                       namespace.force,
                                       get_num_workers(namespace.deterministic))
    print('wrote {:d} frames to {}'.format(len(dataset), out_dir))


def train_head_cmd(namespace):
    config = _config(namespace)
    dataset = load_dataset(namespace.data)
    out_dir = _out_dir(namespace, 'ernf-run')
    ckpt_path, metrics = train_head(dataset, config, out_dir, namespace.deterministic,
                                    namespace.force)
    psnrs = [rec['psnr_val'] for rec in metrics.records if rec['psnr_val'] is not None]
    print('head checkpoint: ' + ckpt_path)
    if psnrs:
        print('final validation psnr: {:.2f} dB'.format(psnrs[-1]))


def train_torso_cmd(namespace):
    config = _config(namespace)
    dataset = load_dataset(namespace.data)
    out_dir = _out_dir(namespace, 'ernf-run')
    head_ckpt = namespace.head_ckpt or os.path.join(out_dir, 'head.ckpt')
    ckpt_path, _ = train_torso(dataset, head_ckpt, config, out_dir, namespace.deterministic,
                               namespace.force)
    print('full checkpoint: ' + ckpt_path)


def render_cmd(namespace):
    if namespace.ckpt.lower() == 'none':
        raise UsageError('checkpoint required')
    if namespace.supersample < 1:
        raise UsageError('--supersample must be >= 1')
    ckpt = load_checkpoint(os.path.realpath(namespace.ckpt))
    head, torso, occupancy = restore_fields(ckpt)
    num_samples = ckpt.meta.get('train', {}).get('num_samples', 16)
    out_dir = _out_dir(namespace, 'ernf-render')
    #
    if namespace.data:
        dataset = load_dataset(namespace.data)
        cam, aabb = dataset.intrinsics, dataset.aabb
        jobs = []
        for index in namespace.frame:
            if not 0 <= index < len(dataset):
                raise UsageError('frame index {:d} outside the dataset'.format(index))
            frame = dataset.frames[index]
            jobs.append((index, frame.camera_pose, frame.audio, frame.eye))
    else:
        if 'intrinsics' not in ckpt.meta:
            raise UsageError('checkpoint has no camera, pass --data')
        cam = CameraIntrinsics(**ckpt.meta['intrinsics'])
        aabb = Aabb(*ckpt.meta['aabb']) if 'aabb' in ckpt.meta else Aabb()
        jobs = [(0, head_placement().inverse(), np.zeros(32), 0.0)]
    #
    num_workers = get_num_workers(namespace.deterministic)
    for index, pose, audio, eye in jobs:
        frame = render_frame(head, cam, pose, (audio, eye), WHITE, torso, aabb, occupancy,
                             num_samples, namespace.supersample, num_workers)
        filename = os.path.join(out_dir, 'frame_{:04d}.{}'.format(index, namespace.format))
        frame.save(filename, overwrite=namespace.force)
        print('rendered ' + filename)
    #
    if namespace.occupancy_out:
        if occupancy is None:
            raise ContractError('checkpoint holds no occupancy grid')
        occupancy_image(occupancy).save_png(namespace.occupancy_out, overwrite=namespace.force)


def collisions_cmd(namespace):
    out_dir = _out_dir(namespace, 'ernf-collisions')
    if min(namespace.R + namespace.N) < 1:
        raise UsageError('--R and --N values must be >= 1')
    rows, summary = complexity_sweep(namespace.R, namespace.N, namespace.resolution,
                                     namespace.table_log2,
                                     get_num_workers(namespace.deterministic))
    write_sweep_csv(rows, os.path.join(out_dir, 'collisions.csv'), namespace.force)
    write_sweep_summary(summary, os.path.join(out_dir, 'collisions.yaml'), namespace.force)
    for label, ratio in summary['ratios'].items():
        text = 'n/a' if ratio is None else '{:.2f}'.format(ratio)
        print('{}: hash3d / trihash collision ratio {}'.format(label, text))


def gradcheck_cmd(namespace):
    seed = 0 if namespace.seed is None else namespace.seed
    if namespace.instances < 1:
        raise UsageError('--instances must be >= 1')
    results = run_gradchecks(namespace.module, seed, namespace.instances,
                             get_num_workers(namespace.deterministic))
    for res in results:
        print('{:<12s} max rel err {:.3e}  {}'.format(res.module, res.max_rel_error,
                                                       'ok' if res.passed else 'FAILED'))
    failed = [res.module for res in results if not res.passed]
    if failed:
        msg = 'gradient check above {:g} for: {}'
        raise RuntimeError(msg.format(TOLERANCE, ', '.join(failed)))


def eval_cmd(namespace):
    dataset = load_dataset(namespace.data)
    out_dir = _out_dir(namespace, 'ernf-eval')
    report = evaluate(namespace.ckpt, dataset, namespace.split,
                      get_num_workers(namespace.deterministic))
    for entry in report['frames']:
        print('frame {:4d}: {:.2f} dB'.format(entry['index'], entry['psnr']))
    if report['mean_psnr'] is not None:
        print('mean psnr: {:.2f} dB'.format(report['mean_psnr']))
    write_report(report, os.path.join(out_dir, 'eval.json'), namespace.force)


def ablation_cmd(namespace):
    config = _config(namespace)
    dataset = load_dataset(namespace.data)
    out_dir = _out_dir(namespace, 'ernf-ablation')
    rows, summary = ablation_study(dataset, config, namespace.seeds, out_dir,
                                   deterministic=namespace.deterministic,
                                   overwrite=namespace.force)
    write_ablation(rows, summary, out_dir, namespace.force)
    print(json.dumps(summary, indent=2))


COMMANDS = {'gen-data': gen_data,
            'train-head': train_head_cmd,
            'train-torso': train_torso_cmd,
            'render': render_cmd,
            'collisions': collisions_cmd,
            'gradcheck': gradcheck_cmd,
            'eval': eval_cmd,
            'ablation': ablation_cmd}


#
########################################################################
#  Driver
########################################################################


def run(argv):
    r"""
    Parses argv, runs the selected command and returns the exit code
    """
    try:
        namespace = parser.parse_args(argv)
    except UsageError as err:
        print('error: {}'.format(err), file=sys.stderr)
        return 1
    except SystemExit as err:
        return err.code or 0
    if not namespace.command:
        parser.print_usage(sys.stderr)
        return 1
    if namespace.verbose:
        set_main_logger_level('debug')
    #
    try:
        COMMANDS[namespace.command](namespace)
    except (UsageError, ContractError, DatasetError, CheckpointError,
            FileExistsError) as err:
        print('error: {}'.format(err), file=sys.stderr)
        return 1
    except Exception as err:
        logger.debug('command failed', exc_info=True)
        print('runtime failure: {}'.format(err), file=sys.stderr)
        return 2
    #
    return 0


def main():
    r"""
    Driver function for the ernf console script
    """
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
