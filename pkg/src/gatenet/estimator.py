"""scikit-learn compatible wrapper around the training loop."""

import numpy as np
from sklearn.base import BaseEstimator

from . import metrics
from .data.synth import Sample
from .model import gate_statistics
from .training.config import TrainConfig
from .training.trainer import train
from .validation import check_images, check_is_fitted, check_masks


class GateNetSaliency(BaseEstimator):
    """Salient object detector with fit / predict_proba / predict / score.

    Parameters
    ----------
    input_size : int
        Side length S of the square input images (multiple of 32 for the
        folded context modules).
    block_channels : tuple of 5 ints
        Encoder widths per level.
    convs_per_block : int
        3x3 conv + ReLU layers per encoder block.
    gates : bool
        Use gate units; when False every gate is the constant 1.
    context : {"fold_aspp", "aspp", "fold", "atrous", "conv1x1"}
        Module producing the top-level transition features.
    rate : int
        Dilation rate for the single-layer ``fold`` / ``atrous`` contexts.
    decoder : {"dual", "progressive", "parallel"}
        Decoder structure.
    epochs, batch_size, base_lr, momentum, weight_decay, poly_power
        SGD recipe; the learning rate follows the poly policy per iteration.
    augment : bool
        Random flip, rotation and colour jitter during training.
    random_state : int
        Seed for initialisation, shuffling and augmentation.
    dtype : {"float32", "float64"}
        Numeric precision of parameters and activations.

    Attributes
    ----------
    model_ : GateNet
        The trained network.
    train_state_ : TrainState
        Final parameters, momentum buffers and iteration count.
    run_log_ : RunLog
        Per-iteration losses and held-out evaluations.
    """

    def __init__(self, input_size=64, block_channels=(16, 32, 64, 64, 64), convs_per_block=2, gates=True,
                 context="fold_aspp", rate=2, decoder="dual", epochs=10, batch_size=4, base_lr=0.01,
                 momentum=0.9, weight_decay=0.0005, poly_power=0.9, augment=True, random_state=0,
                 dtype="float32"):
        self.input_size = input_size
        self.block_channels = block_channels
        self.convs_per_block = convs_per_block
        self.gates = gates
        self.context = context
        self.rate = rate
        self.decoder = decoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.poly_power = poly_power
        self.augment = augment
        self.random_state = random_state
        self.dtype = dtype

    def _train_config(self):
        return TrainConfig(
            preset="custom", base_lr=self.base_lr, momentum=self.momentum, weight_decay=self.weight_decay,
            batch=self.batch_size, epochs=self.epochs, poly_power=self.poly_power, seed=self.random_state,
            input_size=self.input_size, block_channels=tuple(self.block_channels),
            convs_per_block=self.convs_per_block, gates=self.gates, context=self.context, rate=self.rate,
            decoder=self.decoder, augment=self.augment, dtype=self.dtype,
        )

    def fit(self, X, y, eval_set=None):
        """Train on images ``X`` (n, 3, S, S) and binary masks ``y`` (n, S, S).

        ``eval_set`` is an optional ``(X_val, y_val)`` pair evaluated during
        training and recorded in ``run_log_``.
        """
        cfg = self._train_config()
        X = check_images(X, self.input_size)
        y = check_masks(y, len(X), self.input_size)
        test = None
        if eval_set is not None:
            Xv = check_images(eval_set[0], self.input_size)
            yv = check_masks(eval_set[1], len(Xv), self.input_size)
            test = [Sample(a, b) for a, b in zip(Xv, yv)]
        result = train(cfg, [Sample(a, b) for a, b in zip(X, y)], test)
        self.model_ = result.model
        self.train_state_ = result.state
        self.run_log_ = result.log
        return self

    def predict_proba(self, X):
        """Saliency maps (n, S, S) with values in (0, 1)."""
        check_is_fitted(self)
        X = check_images(X, self.input_size, self.model_.dtype)
        return self.model_.predict(X)

    def predict(self, X, threshold=0.5):
        """Binary masks obtained by thresholding :meth:`predict_proba`."""
        return (self.predict_proba(X) >= threshold).astype(np.uint8)

    def transform(self, X):
        """Gate values per image as an array (n, 5, 2) of (g1, g2) per level."""
        check_is_fitted(self)
        X = check_images(X, self.input_size, self.model_.dtype)
        return np.concatenate([self.model_.forward(X[k: k + 8]).gate_values() for k in range(0, len(X), 8)])

    def gate_statistics(self, X):
        check_is_fitted(self)
        return gate_statistics(self.model_, check_images(X, self.input_size, self.model_.dtype))

    def score(self, X, y):
        """Maximum F-measure (beta^2 = 0.3) of the predictions against ``y``."""
        y = check_masks(y, len(X), self.input_size)
        return metrics.f_measure_max(list(self.predict_proba(X)), list(y))
