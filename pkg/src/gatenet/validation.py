"""Input checks shared by the estimator and the CLI."""

import numpy as np
from sklearn.exceptions import NotFittedError


def check_images(X, size=None, dtype=np.float32):
    """Validate a batch of RGB images as float (n, 3, S, S) in [0, 1].

    Channel-last input (n, S, S, 3) is transposed.
    """
    X = np.asarray(X)
    if X.ndim == 3 and X.shape[0] == 3:
        X = X[None]
    if X.ndim != 4:
        raise ValueError(f"expected images of shape (n, 3, S, S), got {X.shape}")
    if X.shape[1] != 3 and X.shape[3] == 3:
        X = X.transpose(0, 3, 1, 2)
    if X.shape[1] != 3:
        raise ValueError(f"expected 3 colour channels, got shape {X.shape}")
    if X.shape[2] != X.shape[3]:
        raise ValueError(f"images must be square, got {X.shape[2]}x{X.shape[3]}")
    if size is not None and X.shape[2] != size:
        raise ValueError(f"images must be {size}x{size}, got {X.shape[2]}x{X.shape[3]}")
    if X.dtype == np.uint8:
        X = X / 255.0
    X = X.astype(dtype, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain NaN or infinite values")
    if X.min() < 0 or X.max() > 1:
        raise ValueError("image values must lie in [0, 1]")
    return X


def check_masks(y, n=None, size=None):
    """Validate binary masks as uint8 (n, S, S)."""
    y = np.asarray(y)
    if y.ndim == 4 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 3:
        raise ValueError(f"expected masks of shape (n, S, S), got {y.shape}")
    if n is not None and len(y) != n:
        raise ValueError(f"got {len(y)} masks for {n} images")
    if size is not None and y.shape[1:] != (size, size):
        raise ValueError(f"masks must be {size}x{size}, got {y.shape[1:]}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("masks must be binary (0/1)")
    return y.astype(np.uint8)


def check_is_fitted(estimator, attr="model_"):
    if getattr(estimator, attr, None) is None:
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")
