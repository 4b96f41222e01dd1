"""State construction: sinusoidal clock, z-scored log-return stacks, position one-hot."""

from __future__ import annotations

from datetime import datetime, timezone

import numpy as np

from .marketdata import AlignedDataset

N_LAGS = 8
ZSCORE_WINDOW = 96
CLIP = 10.0
STD_FLOOR = 1e-8
FEATURES_PER_PAIR = 2 * N_LAGS
TIME_DIM = 3
POSITION_DIM = 3
# bars consumed before the first observation
WARMUP = ZSCORE_WINDOW + 1


class FeatureError(ValueError):
    pass


def time_features(timestamp_ms: int) -> np.ndarray:
    """[minute, hour, day-of-week] each encoded as sin(2*pi*t/T), Monday = 0."""
    dt = datetime.fromtimestamp(timestamp_ms / 1000.0, tz=timezone.utc)
    return np.array([
        np.sin(2.0 * np.pi * dt.minute / 60.0),
        np.sin(2.0 * np.pi * dt.hour / 24.0),
        np.sin(2.0 * np.pi * dt.weekday() / 7.0),
    ])


def log_return_stack(series, count: int = N_LAGS) -> np.ndarray:
    """Most-recent-first log returns from the last ``count + 1`` values of ``series``."""
    x = np.asarray(series, dtype=np.float64)[-(count + 1):]
    if len(x) != count + 1:
        raise FeatureError(f"need {count + 1} values, got {len(x)}")
    if np.any(x <= 0):
        raise FeatureError("log returns need strictly positive values")
    return np.log(x[1:] / x[:-1])[::-1].copy()


def one_hot_position(position: int) -> np.ndarray:
    if position not in (-1, 0, 1):
        raise FeatureError(f"position must be -1, 0 or 1, got {position}")
    v = np.zeros(POSITION_DIM)
    v[position + 1] = 1.0
    return v


class RollingNormalizer:
    """Per-dimension mean/std over the most recent ``window`` values.

    Statistics are recomputed from a ring array on every update (two-pass,
    population std), so a constant window yields a std of exactly zero.
    """

    def __init__(self, dim: int, window: int = ZSCORE_WINDOW):
        self.dim = dim
        self.window = window
        self._ring = np.zeros((window, dim))
        self._count = 0
        self._pos = 0
        self.mean = np.zeros(dim)
        self.std = np.zeros(dim)

    def __len__(self) -> int:
        return min(self._count, self.window)

    @property
    def values(self) -> np.ndarray:
        """Window contents, oldest first."""
        if self._count < self.window:
            return self._ring[: self._count]
        return np.roll(self._ring, -self._pos, axis=0)

    def update(self, x) -> None:
        self._ring[self._pos] = x
        self._pos = (self._pos + 1) % self.window
        self._count += 1
        win = self._ring[: len(self)]
        self.mean = win.mean(axis=0)
        self.std = win.std(axis=0)

    def normalize(self, x) -> np.ndarray:
        std = self.std
        safe = np.where(std < STD_FLOOR, 1.0, std)
        z = np.clip((np.asarray(x) - self.mean) / safe, -CLIP, CLIP)
        return np.where(std < STD_FLOOR, 0.0, z)


def normalize(raw, normalizer: RollingNormalizer) -> np.ndarray:
    """Push ``raw`` into the window, then z-score it against the updated window."""
    normalizer.update(raw)
    return normalizer.normalize(raw)


def raw_pair_features(closes: np.ndarray, volumes: np.ndarray) -> np.ndarray:
    """16 unnormalized features for one pair at the last bar of the given history."""
    vol = np.maximum(volumes, 1.0)
    return np.concatenate([log_return_stack(closes), log_return_stack(vol)])


def market_feature_matrix(ds: AlignedDataset) -> np.ndarray:
    """Normalized market features for every grid slot, shape (len(ds), 16 * n_pairs).

    Rows before slot ``N_LAGS`` are zero (not enough history); from there on one
    normalizer stream per pair is advanced causally, bar by bar.
    """
    n_pairs, n = ds.data.shape[0], len(ds)
    out = np.zeros((n, FEATURES_PER_PAIR * n_pairs))
    if n <= N_LAGS:
        return out
    closes = ds.data[:, :, 3]
    vols = np.maximum(ds.data[:, :, 4], 1.0)
    if np.any(closes <= 0):
        raise FeatureError("non-positive close price in dataset")
    close_ret = np.zeros((n_pairs, n))
    vol_ret = np.zeros((n_pairs, n))
    close_ret[:, 1:] = np.log(closes[:, 1:] / closes[:, :-1])
    vol_ret[:, 1:] = np.log(vols[:, 1:] / vols[:, :-1])

    norm = RollingNormalizer(FEATURES_PER_PAIR * n_pairs)
    lags = np.arange(N_LAGS)
    for k in range(N_LAGS, n):
        idx = k - lags  # most recent first
        raw = np.concatenate([close_ret[:, idx], vol_ret[:, idx]], axis=1).reshape(-1)
        out[k] = normalize(raw, norm)
    return out


def time_feature_matrix(grid: np.ndarray) -> np.ndarray:
    return np.stack([time_features(int(t)) for t in grid]) if len(grid) else np.zeros((0, TIME_DIM))


def core_features(ds: AlignedDataset) -> np.ndarray:
    """Position-free part of the state for every grid slot: [time(3) | market(16 * n_pairs)]."""
    return np.hstack([time_feature_matrix(ds.grid), market_feature_matrix(ds)])


def assemble_state(time: np.ndarray, market: np.ndarray, position: int) -> np.ndarray:
    return np.concatenate([time, market, one_hot_position(position)])


def state_dim(n_pairs: int) -> int:
    return TIME_DIM + FEATURES_PER_PAIR * n_pairs + POSITION_DIM
