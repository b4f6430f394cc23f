"""Monte Carlo error bars for correlated chain output."""

from __future__ import annotations

import numpy as np


def batch_means(x: np.ndarray, batch_len: int) -> np.ndarray:
    """Means of consecutive non-overlapping batches along axis 1.

    ``x`` has shape ``(n_chains, n_samples, ...)``; trailing samples that do
    not fill a batch are dropped. Returns ``(n_chains * n_batches, ...)``.
    """
    x = np.asarray(x, dtype=float)
    n_chains, n = x.shape[:2]
    batch_len = max(1, min(int(batch_len), n))
    nb = n // batch_len
    trimmed = x[:, : nb * batch_len]
    shaped = trimmed.reshape((n_chains, nb, batch_len) + x.shape[2:])
    return shaped.mean(axis=2).reshape((n_chains * nb,) + x.shape[2:])


def batch_means_se(x: np.ndarray, batch_len: int) -> np.ndarray:
    """Standard error of the grand mean from batch means."""
    b = batch_means(x, batch_len)
    if b.shape[0] < 2:
        return np.full(b.shape[1:], np.nan)
    return b.std(axis=0, ddof=1) / np.sqrt(b.shape[0])


def jackknife_se(x: np.ndarray, batch_len: int, stat) -> np.ndarray:
    """Delete-one-batch jackknife standard error of ``stat`` applied to batch means.

    ``stat`` maps a mean over batches (shape ``x.shape[2:]``) to the statistic.
    """
    b = batch_means(x, batch_len)
    nb = b.shape[0]
    if nb < 2:
        return np.full(np.shape(stat(b.mean(axis=0))), np.nan)
    total = b.sum(axis=0)
    leave = np.stack([stat((total - b[i]) / (nb - 1)) for i in range(nb)])
    return np.sqrt((nb - 1) / nb * np.sum((leave - leave.mean(axis=0)) ** 2, axis=0))


def sd_with_se(x: np.ndarray, batch_len: int):
    """Sample standard deviation (ddof=1) pooled over chains, with a batch-means error bar.

    The error bar comes from the batch-means SE of the centred squares, mapped
    through the square root by the delta method.
    """
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, *x.shape[2:])
    var = flat.var(axis=0, ddof=1)
    sd = np.sqrt(var)
    sq = (x - flat.mean(axis=0)) ** 2
    se_var = batch_means_se(sq, batch_len)
    with np.errstate(divide="ignore", invalid="ignore"):
        se_sd = np.where(sd > 0, se_var / (2 * sd), 0.0)
    return sd, se_sd
