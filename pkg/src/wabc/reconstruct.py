"""Turn time series into point clouds whose empirical law carries the dependence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distances import as_dataset


@dataclass(frozen=True)
class ReconstructionConfig:
    """Delay lags and row stride; ``lags=()`` means no delay reconstruction."""

    lags: tuple[int, ...] = ()
    stride: int = 1

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lags)
        if any(l < 1 for l in lags) or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValueError("lags must be strictly increasing positive integers")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        object.__setattr__(self, "lags", lags)

    def __call__(self, series):
        if not self.lags:
            return as_dataset(series)[:: self.stride] if self.stride > 1 else as_dataset(series)
        return delay_reconstruct(series, self.lags, self.stride)


def delay_reconstruct(series, lags=(1,), stride: int = 1) -> np.ndarray:
    """Rows ``(y_t, y_{t-lag_1}, ..., y_{t-lag_k})`` for every ``t`` past the
    largest lag, keeping rows ``0, stride, 2*stride, ...``.

    >>> delay_reconstruct([1, 2, 3, 4], lags=(1,)).tolist()
    [[2.0, 1.0], [3.0, 2.0], [4.0, 3.0]]
    """
    y = as_dataset(series)
    lags = tuple(lags)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    top = max(lags)
    n = y.shape[0]
    if n <= top:
        raise ValueError(f"series of length {n} is too short for lag {top}")
    blocks = [y[top:]] + [y[top - lag: n - lag] for lag in lags]
    return np.hstack(blocks)[::stride]


def curve_embed(series) -> np.ndarray:
    """Prepend the time index ``t = 1..n`` to each observation."""
    y = as_dataset(series)
    t = np.arange(1, y.shape[0] + 1, dtype=float)[:, None]
    return np.hstack([t, y])


def curve_lambda_heuristic(series, h: float = 1.0, v: float = 1.0) -> float:
    """Time weight matching Euclidean distance on a trace plot of aspect H:V.

    A constant series gives 0.
    """
    y = as_dataset(series)
    if y.shape[1] != 1:
        raise ValueError("curve_lambda_heuristic needs a univariate series")
    if y.shape[0] < 2:
        raise ValueError("need at least two observations")
    if h <= 0 or v <= 0:
        raise ValueError("aspect ratio terms must be positive")
    spread = float(y.max() - y.min())
    return spread / v * (h / y.shape[0])


def residual_reconstruct(model, theta, series) -> np.ndarray:
    """Invert the model's noise map at ``theta``; compare the output against
    a standard Normal sample of the same size."""
    fn = getattr(model, "residuals", None)
    if fn is None:
        raise ValueError(f"model {model.name!r} has no residual map")
    return as_dataset(fn(np.asarray(theta, dtype=float), as_dataset(series)))
