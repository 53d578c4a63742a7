"""Train and evaluate the cumulative variant ladder over several seeds."""

import csv
import logging
import os

import numpy as np

from ..model.config import LADDER, ablation_variant
from .trainer import evaluate_model, train

log = logging.getLogger(__name__)

LABELS = {
    "fpn": "FPN baseline",
    "gates": "+ gate units",
    "fold_aspp": "+ Fold-ASPP",
    "full": "+ parallel branch",
}
FIELDS = ("variant", "label", "seeds", "max_f_beta_mean", "max_f_beta_std", "mae_mean", "s_measure_mean",
          "parameters", "max_f_beta_per_seed")


def variant_config(cfg, name):
    """``cfg`` with its architecture keys replaced by ladder variant ``name``."""
    mc = ablation_variant(name, cfg.model_config().backbone, rate=cfg.rate)
    return cfg.replace(gates=mc.gates, context=mc.context, decoder=mc.decoder, rate=mc.rate)


def ablation_config(cfg, name, seed):
    """The exact config one ladder run trains with."""
    return variant_config(cfg, name).replace(seed=seed, eval_every=0)


def run_ablation(cfg, train_set, test_set, seeds=(0, 1, 2), variants=LADDER, trained=None):
    """One row per variant with metrics averaged over ``seeds``.

    ``trained`` maps ``(variant, seed)`` to an already trained model of that
    configuration, which is evaluated instead of being trained again.
    """
    trained = trained or {}
    if not test_set:
        raise ValueError("ablation needs a held-out set")
    rows = []
    for name in variants:
        reports = []
        n_params = 0
        for seed in seeds:
            model = trained.get((name, seed))
            if model is None:
                model = train(ablation_config(cfg, name, seed), train_set).model
            reports.append(evaluate_model(model, test_set))
            n_params = sum(p.size for p in model.parameters())
            log.info("%s seed %d: max F %.4f", name, seed, reports[-1].f_beta_max)
        f = np.array([r.f_beta_max for r in reports])
        rows.append(dict(
            variant=name,
            label=LABELS.get(name, name),
            seeds=len(seeds),
            max_f_beta_mean=float(f.mean()),
            max_f_beta_std=float(f.std()),
            mae_mean=float(np.mean([r.mae for r in reports])),
            s_measure_mean=float(np.mean([r.s_measure for r in reports])),
            parameters=n_params,
            max_f_beta_per_seed=";".join(f"{v:.6f}" for v in f),
        ))
    return rows


def write_rows(rows, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
