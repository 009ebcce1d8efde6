"""Chain diagnostics and posterior summaries.

Convergence is assessed with rank-normalized split R-hat and bulk effective
sample size (Vehtari, Gelman, Simpson, Carpenter, Bürkner 2021): chains are
split in half, rank-normalized through the inverse normal CDF, and the
classic between/within variance ratio is taken over both the raw and the
median-folded ranks. Runs with R-hat above 1.01 are flagged, never rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

RHAT_THRESHOLD = 1.01


class InsufficientDraws(ValueError):
    """Too few chains or retained draws for reliable diagnostics."""


def _split_chains(x: np.ndarray) -> np.ndarray:
    """Halve each chain: (C, M) -> (2C, M // 2)."""
    half = x.shape[1] // 2
    return np.vstack((x[:, :half], x[:, -half:]))


def _z_scale(x: np.ndarray) -> np.ndarray:
    """Rank-normalize pooled draws through the inverse normal CDF."""
    ranks = rankdata(x, method="average")
    z = ndtri((ranks - 0.5) / x.size)
    return z.reshape(x.shape)


def _rhat_basic(x: np.ndarray) -> float:
    """Between/within variance ratio for already-split chains (C, M)."""
    n = x.shape[1]
    chain_means = x.mean(axis=1)
    within = x.var(axis=1, ddof=1).mean()
    between = n * chain_means.var(ddof=1)
    if within == 0.0:
        return np.inf if between > 0 else 1.0
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))


def split_rhat(x: np.ndarray) -> float:
    """Rank-normalized split R-hat of one scalar quantity, draws (C, M)."""
    x = np.asarray(x, dtype=np.float64)
    split = _split_chains(x)
    bulk = _rhat_basic(_z_scale(split))
    folded = _rhat_basic(_z_scale(_split_chains(np.abs(x - np.median(x)))))
    return max(bulk, folded)


def _autocov(x: np.ndarray) -> np.ndarray:
    """Autocovariance of one chain by FFT, biased normalization (length n)."""
    n = x.shape[0]
    centered = x - x.mean()
    f = np.fft.rfft(centered, n=2 * n)
    acov = np.fft.irfft(f * np.conjugate(f), n=2 * n)[:n].real
    return acov / n


def _ess_geyer(x: np.ndarray) -> float:
    """ESS of split chains (C, M) via Geyer's initial monotone sequence."""
    n_chain, n_draw = x.shape
    acov = np.array([_autocov(x[c]) for c in range(n_chain)])
    chain_means = x.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += chain_means.var(ddof=1)
    if var_plus == 0.0:
        return np.nan

    rho = np.zeros(n_draw)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    # initial positive sequence
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho[t + 1] = rho_even
        if (rho_even + rho_odd) >= 0.0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t
    # enforce monotone decrease of paired sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t + 1 : max_t + 2].sum()
    return float(n_chain * n_draw / tau)


def ess_bulk(x: np.ndarray) -> float:
    """Bulk effective sample size of one scalar quantity, draws (C, M)."""
    x = np.asarray(x, dtype=np.float64)
    return _ess_geyer(_z_scale(_split_chains(x)))


@dataclass(eq=False)
class PosteriorSummary:
    """Per-intention posterior summary over retained draws."""

    mean: np.ndarray
    ci5: np.ndarray
    ci95: np.ndarray
    rhat: np.ndarray
    ess: np.ndarray
    zero_variance: np.ndarray

    @property
    def n_intentions(self) -> int:
        return len(self.mean)

    @property
    def converged(self) -> bool:
        return bool(np.all(self.rhat <= RHAT_THRESHOLD))


def summarize(draws: np.ndarray) -> PosteriorSummary:
    """Summarize retained draws of shape (chains, draws_per_chain, N).

    Per intention: posterior mean, equal-tailed 90% credible interval
    (5%/95% quantiles with linear interpolation), rank-normalized split
    R-hat and bulk ESS. A component with zero variance across all draws is
    reported with R-hat 1.0 and flagged.
    """
    draws = np.asarray(draws, dtype=np.float64)
    if draws.ndim != 3:
        raise InsufficientDraws(f"draws must have shape (chains, draws, N), got {draws.shape}")
    chains, kept, n = draws.shape
    if chains < 2:
        raise InsufficientDraws(f"R-hat needs at least 2 chains, got {chains}")
    if kept < 100:
        raise InsufficientDraws(f"need at least 100 retained draws per chain, got {kept}")

    flat = draws.reshape(-1, n)
    mean = flat.mean(axis=0)
    ci5, ci95 = np.quantile(flat, [0.05, 0.95], axis=0)
    rhat = np.empty(n)
    ess = np.empty(n)
    zero_variance = np.zeros(n, dtype=bool)
    for i in range(n):
        x = draws[:, :, i]
        if np.ptp(x) == 0.0:
            zero_variance[i] = True
            rhat[i] = 1.0
            ess[i] = np.nan
        else:
            rhat[i] = split_rhat(x)
            ess[i] = ess_bulk(x)
    return PosteriorSummary(mean, ci5, ci95, rhat, ess, zero_variance)


class Argmax(NamedTuple):
    index: int
    tied: bool


def argmax_intention(summary) -> Argmax:
    """Intention with the highest posterior mean; ties break to the lowest
    index and are reported. Accepts a PosteriorSummary or a vector of means."""
    means = summary.mean if isinstance(summary, PosteriorSummary) else summary
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 1 or means.size == 0:
        raise ValueError("expected a non-empty vector of posterior means")
    index = int(np.argmax(means))
    tied = bool((means == means[index]).sum() > 1)
    return Argmax(index=index, tied=tied)
