"""Input validation and small numeric helpers shared across modules."""
from __future__ import annotations

import numbers

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class ValidationError(ValueError):
    """Raised when loaded or constructed data fails a structural check."""


def check_rng(seed=None) -> np.random.Generator:
    """Turn ``seed`` into a ``np.random.Generator``.

    Accepts ``None``, an int, a ``SeedSequence`` or an existing Generator
    (returned as-is so the caller keeps ownership of the stream).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise InvalidArgumentError(f"{seed!r} cannot be used to seed a Generator")


def check_soft_adjacency(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or A.min(initial=0.0) < 0.0 or A.max(initial=0.0) > 1.0:
        raise InvalidArgumentError(f"{name} entries must lie in [0, 1]")
    if np.any(np.diag(A) != 0.0):
        raise InvalidArgumentError(f"{name} must have a zero diagonal")
    return A


def check_values(X, n_vars=None, m=None) -> np.ndarray:
    """Validate a (n_samples, n_vars) matrix of category indices."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise InvalidArgumentError(f"expected a 2D array of samples, got ndim={X.ndim}")
    if X.size and not np.issubdtype(X.dtype, np.integer):
        if not np.all(X == np.round(X)):
            raise InvalidArgumentError("sample values must be integer category indices")
    X = X.astype(np.int64, copy=False)
    if n_vars is not None and X.shape[1] != n_vars:
        raise InvalidArgumentError(f"expected {n_vars} columns, got {X.shape[1]}")
    if m is not None and X.size and (X.min() < 0 or X.max() >= m):
        raise InvalidArgumentError(f"sample values must lie in [0, {m})")
    return X


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def sample_categorical(probs, rng) -> np.ndarray:
    """Inverse-CDF draws from rows of ``probs`` (last axis is the category)."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(cdf.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = (cdf <= u).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)
