"""Seeded training loop with poly schedule, run logs and checkpoints."""

import csv
import logging
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .. import metrics
from ..autograd import GradTape, backward
from ..data.transforms import AugmentationConfig, augment, stack
from ..model import GateNet, loss
from .checkpoint import TrainState, save_checkpoint
from .optim import SGD, NumericError, poly_lr

log = logging.getLogger(__name__)

ITER_FIELDS = ("iter", "epoch", "lr", "loss", "l_s1", "l_sf")
EVAL_FIELDS = ("epoch", "max_f_beta", "mae", "s_measure")


@dataclass
class RunLog:
    iterations: list = field(default_factory=list)
    evals: list = field(default_factory=list)

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for name, rows, cols in (("run_log.csv", self.iterations, ITER_FIELDS),
                                 ("eval_log.csv", self.evals, EVAL_FIELDS)):
            with open(os.path.join(out_dir, name), "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols)
                w.writeheader()
                for row in rows:
                    w.writerow({k: _fmt(row[k]) for k in cols})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


@dataclass
class TrainResult:
    model: GateNet
    state: TrainState
    log: RunLog


def evaluate_model(model, samples, batch_size=8):
    images = np.stack([s.image for s in samples])
    preds = model.predict(images, batch_size=batch_size)
    return metrics.evaluate(list(preds), [s.mask for s in samples])


def _batch_samples(dataset, order, k, batch, cfg, epoch, aug_cfg):
    idx = order[k: k + batch]
    samples = []
    for i in idx:
        s = dataset[i]
        if cfg.augment:
            s = augment(s, aug_cfg, np.random.default_rng([cfg.seed, epoch, int(i)]))
        samples.append(s)
    return stack(samples)


def train(cfg, train_set, test_set=None, resume=None, out_dir=None, stop_after=None):
    """Train a model on ``train_set`` (a list of samples).

    Every random choice derives from ``cfg.seed``, the epoch and the sample
    index, so a run resumed from a checkpoint follows the same trajectory as
    an uninterrupted one. ``stop_after`` ends the run after that many total
    iterations (used for interrupted-run tests); the schedule is unaffected.
    """
    if not train_set:
        raise ValueError("training set is empty")
    n_batches = math.ceil(len(train_set) / cfg.batch)
    max_iter = cfg.max_iter or cfg.epochs * n_batches
    model = GateNet(cfg.model_config(), seed=cfg.seed, dtype=cfg.np_dtype)
    opt = SGD(model.params, cfg.momentum, cfg.weight_decay)
    start = 0
    if resume is not None:
        model.load_state_dict(resume.params)
        for k, v in resume.momentum.items():
            opt.state[k] = v.astype(model.dtype, copy=True)
        start = resume.iteration
    aug_cfg = AugmentationConfig()
    run = RunLog()
    ckpt_path = os.path.join(out_dir, "checkpoint.gnet") if out_dir else None
    end = max_iter if stop_after is None else min(max_iter, stop_after)

    def snapshot(iteration):
        return TrainState(cfg, model.state_dict(), OrderedDict((k, v.copy()) for k, v in opt.state.items()),
                          iteration)

    it = start
    epoch = start // n_batches
    while it < end:
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_set))
        first = (it - epoch * n_batches) * cfg.batch
        for k in range(first, len(train_set), cfg.batch):
            if it >= end:
                break
            x, y = _batch_samples(train_set, order, k, cfg.batch, cfg, epoch, aug_cfg)
            with GradTape() as tape:
                out = model.forward(x)
                total, l_s1, l_sf = loss(out, y)
            value = total.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss {value} at iteration {it}")
            grads = backward(tape, total, model.parameters())
            lr = poly_lr(it, max_iter, cfg.base_lr, cfg.poly_power)
            opt.step(OrderedDict((name, grads[p]) for name, p in model.params.items()), lr)
            run.iterations.append(dict(iter=it, epoch=epoch, lr=lr, loss=value,
                                       l_s1=l_s1.item() if l_s1 is not None else float("nan"),
                                       l_sf=l_sf.item()))
            if it % 50 == 0:
                log.info("iter %d/%d lr %.3g loss %.4f", it, max_iter, lr, value)
            it += 1
            if ckpt_path and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
                save_checkpoint(snapshot(it), ckpt_path)
        if it % n_batches == 0 or it >= max_iter:
            epoch_done = (it - 1) // n_batches
            last = it >= max_iter
            if test_set and (last or (cfg.eval_every and (epoch_done + 1) % cfg.eval_every == 0)):
                rep = evaluate_model(model, test_set)
                run.evals.append(dict(epoch=epoch_done, max_f_beta=rep.f_beta_max, mae=rep.mae,
                                      s_measure=rep.s_measure))
        epoch += 1

    state = snapshot(it)
    if ckpt_path:
        save_checkpoint(state, ckpt_path)
        run.write(out_dir)
    return TrainResult(model, state, run)
