"""
Xi-Net - Command Line Application
=================================
Seismic gap reconstruction pipeline:
- gen: synthetic dataset with gaps and an 80/20 train/val split
- train: fit a network variant and write a checkpoint plus loss history
- eval: gap-restricted DFD / MRD / MAE / RMSE of a model or a baseline
- reconstruct: fill the gap of one waveform file
- plot: three-panel SVG (original / gapped / reconstructed) plus trace CSV

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import logging
import os
import sys

from dotenv import load_dotenv

# Loading environment variables
load_dotenv()

# Importing application modules
import dataset  # noqa: E402
import metrics  # noqa: E402
import plotting  # noqa: E402
import trainer  # noqa: E402
from config import settings  # noqa: E402
from models import GapSpec, TrainConfig, XiNetConfig, parse_config  # noqa: E402
from xinet.checkpoint import load_checkpoint, save_checkpoint  # noqa: E402
from xinet.errors import ConfigError, DataFormatError, UsageError, XiNetError  # noqa: E402
from xinet.network import build_model, count_parameters, predict  # noqa: E402

logger = logging.getLogger('xinet')


# ============================================
# HELPERS
# ============================================
def manifest_path(data):
    """Accepting either a dataset directory or its manifest.json."""
    return os.path.join(data, 'manifest.json') if os.path.isdir(data) else data


def read_json(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"invalid JSON ({e.msg})", path, e.lineno)


def write_text(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)


def parse_gap(text):
    """'start,length' -> (start, length)."""
    try:
        start, length = (int(v) for v in text.split(','))
    except ValueError:
        raise ConfigError(f"--gap expects 'start,length', got '{text}'")
    return start, length


# ============================================
# SUBCOMMANDS
# ============================================
def cmd_gen(args):
    """Generating a synthetic dataset directory."""
    warning = dataset.model_length_warning(args.length)
    if warning:
        logger.warning(warning)
        print(f"warning: {warning}", file=sys.stderr)
    samples = dataset.build_dataset(args.count, args.length, args.sample_rate, seed=args.seed,
                                    noise_std=args.noise_std, workers=args.workers)
    manifest = dataset.write_dataset(args.out, samples, args.seed, args.val_fraction)
    print(f"wrote {len(manifest.files)} records to {args.out} "
          f"({len(manifest.split['train'])} train / {len(manifest.split['val'])} val)")
    return 0


def load_configs(args, manifest):
    """Model and training configs from --config JSON ({"model": ..., "train": ...}) and flags."""
    payload = read_json(args.config) if args.config else {}
    model_payload = dict(payload.get('model', {}))
    train_payload = dict(payload.get('train', {}))
    if 'input_length' in model_payload and model_payload['input_length'] != manifest.length:
        raise ConfigError(f"config input_length {model_payload['input_length']} does not match "
                          f"dataset length {manifest.length}")
    model_payload['input_length'] = manifest.length
    if args.variant:
        model_payload['variant'] = args.variant
    if args.seed is not None:
        model_payload['seed'] = args.seed
        train_payload['seed'] = args.seed
    if args.epochs is not None:
        train_payload['epochs'] = args.epochs
    return parse_config(XiNetConfig, model_payload), parse_config(TrainConfig, train_payload)


def cmd_train(args):
    """Training a model on the train split and writing the checkpoint."""
    manifest, train_samples = dataset.load_dataset(manifest_path(args.data), 'train')
    _, val_samples = dataset.load_dataset(manifest_path(args.data), 'val')
    model_config, train_config = load_configs(args, manifest)
    model = build_model(model_config)
    logger.info("%s model with %d parameters", model_config.variant, count_parameters(model))

    result = trainer.train(model, train_samples, train_config, val_samples=val_samples or None)
    save_checkpoint(args.out_ckpt, result.checkpoint)
    history_path = args.history or os.path.splitext(args.out_ckpt)[0] + '.history.csv'
    trainer.write_history_csv(history_path, result.history)
    last = result.history[-1]
    print(f"trained {model_config.variant} for {len(result.history)} epochs, "
          f"final loss {last.train_loss:.6f}; wrote {args.out_ckpt} and {history_path}")
    return 0


def cmd_eval(args):
    """Evaluating checkpoints and/or a baseline on a dataset split."""
    if not args.ckpt and not args.baseline:
        raise ConfigError("eval needs --ckpt or --baseline")
    manifest, samples = dataset.load_dataset(manifest_path(args.data), args.split)
    if not samples:
        raise ConfigError(f"split '{args.split}' of {args.data} is empty")
    evaluator = metrics.Evaluator(workers=args.workers)

    columns = []
    if args.compare and args.baseline != 'zero_fill':
        columns.append(('zero_fill', 'zero_fill'))
    if args.baseline:
        columns.append((args.baseline, args.baseline))
    for path in args.ckpt or []:
        model, _ = load_checkpoint(path)
        if model.config.input_length != manifest.length:
            raise ConfigError(f"checkpoint {path} expects {model.config.input_length} points, "
                              f"dataset has {manifest.length}")
        columns.append((metrics.ModelReconstructor(model), model.config.variant))

    reports = [evaluator.evaluate(samples, recon, margin=args.margin, dfd_metric=args.dfd_metric, name=name)
               for recon, name in columns]
    table = metrics.compare_table(reports)
    print(table, end='')
    if args.report:
        dumped = [r.model_dump() for r in reports]
        write_text(args.report, json.dumps(dumped[0] if len(dumped) == 1 else dumped, indent=2) + '\n')
        write_text(os.path.splitext(args.report)[0] + '.txt', table)
    return 0


def reconstruct_file(ckpt_path, in_path, gap=None):
    """
    Reconstructing one gapped waveform file.

    Returns:
    - (reconstructed Waveform, GapSpec)
    """
    model, _ = load_checkpoint(ckpt_path)
    waveform, file_gap = dataset.load_waveform(in_path)
    if gap is not None:
        file_gap = GapSpec(start_index=gap[0], length_samples=gap[1],
                           sample_rate_hz=waveform.sample_rate_hz)
    if file_gap is None:
        raise DataFormatError("no gap given (header '# gap:' or --gap)", in_path)
    sample = dataset.make_sample(waveform, file_gap)
    if sample.length != model.config.input_length:
        raise ConfigError(f"{in_path} has {sample.length} points, checkpoint expects "
                          f"{model.config.input_length}")
    output = predict(model, sample.input.samples[None, :])[0]
    return metrics.splice(sample.input, output, file_gap), file_gap


def cmd_reconstruct(args):
    gap = parse_gap(args.gap) if args.gap else None
    reconstructed, file_gap = reconstruct_file(args.ckpt, args.input, gap)
    dataset.save_waveform(args.out, reconstructed, file_gap)
    print(f"wrote {args.out}")
    return 0


def cmd_plot(args):
    original, _ = dataset.load_waveform(args.target)
    gapped, gap = dataset.load_waveform(args.gapped)
    reconstructed, recon_gap = dataset.load_waveform(args.recon)
    gap = gap or recon_gap
    plotting.plot_reconstruction(args.out, original, gapped, reconstructed, gap)
    csv_path = args.csv or os.path.splitext(args.out)[0] + '.csv'
    plotting.write_trace_csv(csv_path, original, gapped, reconstructed)
    print(f"wrote {args.out} and {csv_path}")
    return 0


# ============================================
# ARGUMENT PARSING
# ============================================
class XiNetArgumentParser(argparse.ArgumentParser):
    """Reports usage mistakes through the one-line error contract instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = XiNetArgumentParser(prog='xinet', description='Seismic waveform gap reconstruction')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', help='generate a synthetic dataset')
    gen.add_argument('--count', type=int, required=True)
    gen.add_argument('--length', type=int, default=settings.DEFAULT_LENGTH)
    gen.add_argument('--sample-rate', type=float, default=settings.DEFAULT_SAMPLE_RATE_HZ)
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--noise-std', type=float, default=0.05)
    gen.add_argument('--val-fraction', type=float, default=settings.VAL_FRACTION)
    gen.add_argument('--workers', type=int, default=1)
    gen.add_argument('--out', default=settings.DATA_DIR)
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser('train', help='train a model')
    train.add_argument('--data', default=settings.DATA_DIR)
    train.add_argument('--config')
    train.add_argument('--out-ckpt', required=True)
    train.add_argument('--variant', choices=['full', 'time_only', 'single_encoder'])
    train.add_argument('--epochs', type=int)
    train.add_argument('--seed', type=int)
    train.add_argument('--history')
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser('eval', help='evaluate checkpoints or baselines')
    ev.add_argument('--data', default=settings.DATA_DIR)
    ev.add_argument('--ckpt', action='append')
    ev.add_argument('--baseline', choices=sorted(metrics.RECONSTRUCTORS))
    ev.add_argument('--compare', action='store_true', help='add the zero-fill reference column')
    ev.add_argument('--split', default='val', choices=['train', 'val'])
    ev.add_argument('--margin', type=int, default=0)
    ev.add_argument('--dfd-metric', default='amplitude', choices=list(metrics.DFD_METRICS))
    ev.add_argument('--workers', type=int, default=settings.EVAL_WORKERS)
    ev.add_argument('--report')
    ev.set_defaults(func=cmd_eval)

    rec = sub.add_parser('reconstruct', help='fill the gap of one waveform file')
    rec.add_argument('--ckpt', required=True)
    rec.add_argument('--in', dest='input', required=True)
    rec.add_argument('--gap', help="'start,length' when the file has no gap header")
    rec.add_argument('--out', required=True)
    rec.set_defaults(func=cmd_reconstruct)

    plot = sub.add_parser('plot', help='three-panel SVG figure')
    plot.add_argument('--target', required=True)
    plot.add_argument('--gapped', required=True)
    plot.add_argument('--recon', required=True)
    plot.add_argument('--out', required=True)
    plot.add_argument('--csv')
    plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    """Running one subcommand; returns the process exit code."""
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT, stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except XiNetError as e:
        print(f"error: {e.kind}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 3


# ============================================
# APPLICATION ENTRY POINT
# ============================================
if __name__ == '__main__':
    sys.exit(main())
