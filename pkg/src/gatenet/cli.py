"""Command line entry point: ``gatenet <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import csv
import dataclasses
import logging
import os
import sys

import numpy as np

from . import metrics
from .autograd.gradcheck import RTOL, check_model, check_ops, generic_point
from .data import netpbm
from .data.synth import SynthSpec, read_dataset, synth_generate, write_dataset
from .data.transforms import resize
from .model import GateNet, gate_statistics
from .model.config import BackboneConfig, ModelConfig
from .training import ablation
from .training import config as cfgmod
from .training.checkpoint import CheckpointError, load_checkpoint
from .training.optim import NumericError
from .training.trainer import train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("gatenet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; usage errors here are 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p):
    p.add_argument("--config", help="key = value config file; flags below override it")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    for f in dataclasses.fields(cfgmod.TrainConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar=f.name.upper(),
                       help=argparse.SUPPRESS)


def _config_from_args(args):
    pairs = {}
    if args.config:
        with open(args.config) as fh:
            pairs.update(cfgmod.parse_pairs(fh.read()))
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    for k, v in vars(args).items():
        if k.startswith("cfg_") and v is not None:
            pairs[k[4:]] = v
    try:
        return cfgmod.from_pairs(pairs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_samples(root, size):
    samples = read_dataset(root)
    return [s if s.mask.shape[0] == size else resize(s, size) for s in samples]


def _image_files(path):
    if os.path.isdir(os.path.join(path, "images")):
        path = os.path.join(path, "images")
    if os.path.isfile(path):
        return [path]
    names = sorted(f for f in os.listdir(path) if f.endswith(".ppm"))
    if not names:
        raise FileNotFoundError(f"no .ppm images in {path}")
    return [os.path.join(path, n) for n in names]


def _model_from_checkpoint(path):
    state = load_checkpoint(path)
    model = GateNet(state.config.model_config(), dtype=state.config.np_dtype)
    model.load_state_dict(state.params)
    return model, state


# -- subcommands --------------------------------------------------------------


def cmd_synth_data(args):
    spec = SynthSpec(seed=args.seed, count=args.count, size=args.size)
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_dataset(synth_generate(spec), args.out_dir)
    print(f"wrote {args.count} samples to {args.out_dir}")
    return EXIT_OK


def cmd_train(args):
    cfg = _config_from_args(args)
    train_set = _load_samples(args.data, cfg.input_size)
    test_set = _load_samples(args.test_data, cfg.input_size) if args.test_data else None
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume, expected=cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "config.txt"), "w") as fh:
        fh.write(cfg.to_text())
    result = train(cfg, train_set, test_set, resume=resume, out_dir=args.out_dir)
    last = result.log.iterations[-1] if result.log.iterations else None
    if last:
        print(f"iteration {last['iter'] + 1}: loss {last['loss']:.4f}")
    for row in result.log.evals[-1:]:
        print(f"held-out max F {row['max_f_beta']:.4f}  MAE {row['mae']:.4f}  S {row['s_measure']:.4f}")
    print(f"checkpoint: {os.path.join(args.out_dir, 'checkpoint.gnet')}")
    return EXIT_OK


def cmd_eval(args):
    report = metrics.evaluate_dataset(args.pred_dir, args.gt_dir)
    out = args.out_dir or args.pred_dir
    report.write_csv(out)
    for name, val in report.rows():
        print(f"{name:12s} {val:.6f}")
    return EXIT_OK


def cmd_infer(args):
    model, state = _model_from_checkpoint(args.checkpoint)
    size = state.config.input_size
    os.makedirs(args.out_dir, exist_ok=True)
    files = _image_files(args.images)
    for path in files:
        image = netpbm.load_image(path)
        if image.shape[1:] != (size, size):
            raise ValueError(f"{path}: expected {size}x{size} input, got {image.shape[1]}x{image.shape[2]}")
        pred = model.predict(image[None].astype(model.dtype))[0]
        stem = os.path.splitext(os.path.basename(path))[0]
        netpbm.save_map(os.path.join(args.out_dir, stem + ".pgm"), pred)
    print(f"wrote {len(files)} maps to {args.out_dir}")
    return EXIT_OK


def cmd_gradcheck(args):
    failed = False
    print(f"{'operator':22s} {'cases':>5s} {'max rel err':>12s}")
    for r in check_ops(cases=args.cases, seed=args.seed):
        print(f"{r.name:22s} {r.cases:5d} {r.max_rel_error:12.3e} {'ok' if r.passed else 'FAIL'}")
        failed |= not r.passed
    if args.model:
        rng = np.random.default_rng(args.seed)
        for size, context in ((32, "fold_aspp"), (16, "aspp")):
            mc = ModelConfig(BackboneConfig((2, 2, 2, 2, 2), 2, size), context=context)
            model = generic_point(GateNet(mc, seed=args.seed, dtype=np.float64), args.seed)
            x = rng.uniform(0, 1, (2, 3, size, size))
            y = (rng.uniform(size=(2, size, size)) > 0.5).astype(np.float64)
            errors = check_model(model, x, y, seed=args.seed)
            worst = max(errors, key=errors.get)
            ok = errors[worst] < 1e-3
            failed |= not ok
            print(f"model S={size} {context:10s} {len(errors):3d} tensors, max rel err {errors[worst]:.3e} "
                  f"({worst}) {'ok' if ok else 'FAIL'}")
    print("gradient check " + ("FAILED" if failed else f"passed (rtol {RTOL:g} per op)"))
    return EXIT_NUMERIC if failed else EXIT_OK


def gate_trend(g1, g2):
    """Whether g1 rises and g2 falls with level (a full-scale observation)."""
    return bool(np.all(np.diff(g1) > 0) and np.all(np.diff(g2) < 0))


def write_gate_csv(g1, g2, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gate"] + [f"level{i}" for i in range(1, 6)])
        for name, vals in (("g1", g1), ("g2", g2)):
            w.writerow([name] + [f"{v:.6f}" for v in vals])


def cmd_gate_stats(args):
    model, state = _model_from_checkpoint(args.checkpoint)
    if not state.config.gates:
        raise UsageError("checkpoint was trained without gate units")
    samples = _load_samples(args.data, state.config.input_size)
    images = np.stack([s.image for s in samples]).astype(model.dtype)
    g1, g2 = gate_statistics(model, images)
    write_gate_csv(g1, g2, args.out)
    print("level " + " ".join(f"{i:>7d}" for i in range(1, 6)))
    print("g1    " + " ".join(f"{v:7.4f}" for v in g1))
    print("g2    " + " ".join(f"{v:7.4f}" for v in g2))
    if gate_trend(g1, g2):
        print("trend PASS: g1 increases and g2 decreases with level")
    else:
        print("trend INFO: g1 increasing / g2 decreasing not observed (advisory only)")
    return EXIT_OK


def cmd_ablate(args):
    cfg = _config_from_args(args)
    if args.data:
        train_set = _load_samples(args.data, cfg.input_size)
        test_set = _load_samples(args.test_data, cfg.input_size) if args.test_data else None
        if test_set is None:
            raise UsageError("--test-data is required with --data")
    else:
        ds = synth_generate(SynthSpec(seed=args.synth_seed, count=args.train_count + args.test_count,
                                      size=cfg.input_size))
        train_set, test_set = ds[: args.train_count], ds[args.train_count:]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = ablation.run_ablation(cfg, train_set, test_set, seeds)
    path = os.path.join(args.out_dir, "ablation.csv")
    ablation.write_rows(rows, path)
    for row in rows:
        print(f"{row['label']:20s} max F {row['max_f_beta_mean']:.4f} +- {row['max_f_beta_std']:.4f}  "
              f"MAE {row['mae_mean']:.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="gatenet", description="Gated dual-branch salient object detection.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth-data", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train a model; config keys are also accepted as --key flags")
    p.add_argument("--data", required=True, help="dataset root with images/ and masks/")
    p.add_argument("--test-data", help="held-out dataset root evaluated during training")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a directory of predicted maps")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out-dir", help="where metrics.csv and pr_curve.csv go (default: --pred-dir)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="write saliency maps as PGM")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True, help="a .ppm file, a directory of them, or a dataset root")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gradcheck", help="finite-difference check of every operator")
    p.add_argument("--cases", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", action="store_true", help="also check the whole tiny model")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gate-stats", help="mean gate values per level as a 2x5 CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_gate_stats)

    p = sub.add_parser("ablate", help="train and compare the variant ladder")
    p.add_argument("--data", help="training dataset root (default: generate synthetic data)")
    p.add_argument("--test-data")
    p.add_argument("--synth-seed", type=int, default=1)
    p.add_argument("--train-count", type=int, default=200)
    p.add_argument("--test-count", type=int, default=50)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gatenet {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"gatenet {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, netpbm.NetpbmError, CheckpointError) as exc:
        print(f"gatenet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
