"""Bayesian intention inference over the probability simplex.

Model: each observed action is categorical under the mixture of per-intention
surrogate likelihoods, theta_k(pi) = sum_i P(a_k | intention i) * pi_i, with a
Dirichlet(alpha) prior on the intention probability vector pi. The posterior
is estimated by adaptive random-walk Metropolis in additive-log-ratio
coordinates (with the log-Jacobian correction), and cross-checked against an
exact barycentric-grid quadrature oracle for N in {2, 3}.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import StringIO

import numpy as np
from scipy.special import gammaln

from .diagnostics import InsufficientDraws, PosteriorSummary, summarize
from .predictor import LikelihoodMatrix

SIMPLEX_TOL = 1e-9
MIN_GRID_RESOLUTION = 100


class InferenceError(ValueError):
    """Invalid inference input or configuration."""


@dataclass(frozen=True)
class InferenceConfig:
    """MCMC configuration: 4 chains of 2,000 iterations with the first 1,000
    discarded as warmup, uninformative Dirichlet(1) prior."""

    chains: int = 4
    iterations: int = 2000
    warmup: int = 1000
    alpha: float | tuple[float, ...] = 1.0
    step_size: float = 0.3
    target_accept: float = 0.35
    seed: int = 0

    def __post_init__(self):
        if self.chains < 1:
            raise InferenceError(f"chains must be >= 1, got {self.chains}")
        if not 0 <= self.warmup < self.iterations:
            raise InferenceError(
                f"warmup must satisfy 0 <= warmup < iterations, got "
                f"{self.warmup}/{self.iterations}"
            )
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if (alpha <= 0).any():
            raise InferenceError("all alpha entries must be > 0")
        if self.step_size <= 0:
            raise InferenceError(f"step_size must be > 0, got {self.step_size}")
        if not 0 < self.target_accept < 1:
            raise InferenceError(f"target_accept must be in (0, 1), got {self.target_accept}")
        if self.seed < 0:
            raise InferenceError("seed must be non-negative")


def _as_probs(lm) -> np.ndarray:
    """Accept a LikelihoodMatrix or a raw array; entries must be positive."""
    probs = lm.probs if isinstance(lm, LikelihoodMatrix) else np.asarray(lm, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 1:
        raise InferenceError(f"likelihood matrix must be 2-D and non-empty, got {probs.shape}")
    if not np.isfinite(probs).all() or (probs <= 0).any():
        raise InferenceError("likelihood entries must be finite and > 0 (floored)")
    return probs


def _resolve_alpha(alpha, n: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=np.float64))
    if a.size == 1:
        a = np.full(n, a[0])
    if a.shape != (n,):
        raise InferenceError(f"alpha has {a.size} entries for {n} intentions")
    if (a <= 0).any():
        raise InferenceError("all alpha entries must be > 0")
    return a


def _dirichlet_log_const(alpha: np.ndarray) -> float:
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum())


def log_posterior(pi, lm, alpha=1.0) -> float:
    """Unnormalized log posterior density at a simplex point:
    sum_k log(sum_i lm[k, i] * pi_i) plus the log Dirichlet(alpha) density."""
    probs = _as_probs(lm)
    n = probs.shape[1]
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (n,):
        raise InferenceError(f"pi has shape {pi.shape}, expected ({n},)")
    if (pi < -SIMPLEX_TOL).any() or abs(pi.sum() - 1.0) > SIMPLEX_TOL:
        raise InferenceError("pi is off the simplex beyond tolerance 1e-9")
    pi = np.clip(pi, 0.0, None)
    alpha = _resolve_alpha(alpha, n)
    loglik = float(np.log(probs @ pi).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(alpha == 1.0, 0.0, (alpha - 1.0) * np.log(pi))
    return loglik + _dirichlet_log_const(alpha) + float(terms.sum())


def _inv_alr(y: np.ndarray) -> np.ndarray:
    """Additive-log-ratio inverse: R^(N-1) -> interior of the N-simplex."""
    u = np.append(y, 0.0)
    u -= u.max()
    e = np.exp(u)
    return e / e.sum()


def _log_target(y, probs, alpha, log_const):
    """Log posterior in ALR coordinates, including the log-Jacobian
    sum_i log(pi_i). Returns (logp, pi)."""
    pi = _inv_alr(y)
    if (pi <= 0.0).any():  # underflow far out in the tails
        return -np.inf, pi
    log_pi = np.log(pi)
    loglik = np.log(probs @ pi).sum()
    prior = log_const + ((alpha - 1.0) * log_pi).sum()
    return loglik + prior + log_pi.sum(), pi


@dataclass(eq=False)
class IntentionPosterior:
    """Retained MCMC draws over the intention simplex with summary."""

    draws: np.ndarray  # (chains, kept, N)
    summary: PosteriorSummary
    acceptance: np.ndarray  # post-warmup acceptance rate per chain

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.float64)
        if draws.ndim != 3:
            raise InferenceError(f"draws must have shape (chains, kept, N), got {draws.shape}")
        if (draws < -SIMPLEX_TOL).any() or (
            np.abs(draws.sum(axis=2) - 1.0) > SIMPLEX_TOL
        ).any():
            raise InferenceError("a retained draw lies off the simplex beyond 1e-9")
        self.draws = draws


def _summary_without_diagnostics(draws: np.ndarray) -> PosteriorSummary:
    """Mean/CI only, for runs too small for R-hat (single chain, short runs)."""
    chains, kept, n = draws.shape
    flat = draws.reshape(-1, n)
    ci5, ci95 = np.quantile(flat, [0.05, 0.95], axis=0)
    zero_variance = np.array([np.ptp(draws[:, :, i]) == 0.0 for i in range(n)])
    rhat = np.where(zero_variance, 1.0, np.nan)
    return PosteriorSummary(
        mean=flat.mean(axis=0), ci5=ci5, ci95=ci95, rhat=rhat,
        ess=np.full(n, np.nan), zero_variance=zero_variance,
    )


def sample_posterior(lm, cfg: InferenceConfig = InferenceConfig()) -> IntentionPosterior:
    """Estimate the intention posterior by adaptive random-walk Metropolis.

    Chains are independent, each seeded from (cfg.seed, chain index) and
    started at its own Dirichlet(alpha) draw. A single isotropic proposal
    step is Robbins-Monro-adapted toward cfg.target_accept during warmup
    only, then frozen to preserve detailed balance. Deterministic given the
    seed.
    """
    probs = _as_probs(lm)
    n = probs.shape[1]
    alpha = _resolve_alpha(cfg.alpha, n)
    kept = cfg.iterations - cfg.warmup

    if n == 1:
        draws = np.ones((cfg.chains, kept, 1))
        summary = PosteriorSummary(
            mean=np.array([1.0]), ci5=np.array([1.0]), ci95=np.array([1.0]),
            rhat=np.array([1.0]), ess=np.array([np.nan]),
            zero_variance=np.array([True]),
        )
        return IntentionPosterior(draws, summary, np.ones(cfg.chains))

    log_const = _dirichlet_log_const(alpha)
    draws = np.empty((cfg.chains, kept, n))
    acceptance = np.empty(cfg.chains)
    for c in range(cfg.chains):
        rng = np.random.default_rng([cfg.seed, c])
        pi0 = np.clip(rng.dirichlet(alpha), 1e-12, None)
        pi0 /= pi0.sum()
        y = np.log(pi0[:-1]) - np.log(pi0[-1])
        logp, pi = _log_target(y, probs, alpha, log_const)
        if not np.isfinite(logp):
            raise InferenceError("non-finite log-posterior at chain initialization")
        log_step = np.log(cfg.step_size)
        accepted_kept = 0
        for t in range(1, cfg.iterations + 1):
            proposal = y + np.exp(log_step) * rng.standard_normal(n - 1)
            logp_prop, pi_prop = _log_target(proposal, probs, alpha, log_const)
            log_ratio = logp_prop - logp
            accept_prob = np.exp(min(0.0, log_ratio)) if np.isfinite(log_ratio) else 0.0
            accepted = rng.random() < accept_prob
            if accepted:
                y, logp, pi = proposal, logp_prop, pi_prop
            if t <= cfg.warmup:
                log_step += (accept_prob - cfg.target_accept) / t**0.6
            else:
                draws[c, t - cfg.warmup - 1] = pi
                accepted_kept += accepted
        acceptance[c] = accepted_kept / kept

    try:
        summary = summarize(draws)
    except InsufficientDraws:
        summary = _summary_without_diagnostics(draws)
    return IntentionPosterior(draws, summary, acceptance)


# -- grid-integration oracle -------------------------------------------------


@dataclass(eq=False)
class GridOracleResult:
    means: np.ndarray
    error: np.ndarray  # estimated quadrature error (difference to half resolution)
    resolution: int


def _grid_points(n: int, resolution: int) -> np.ndarray:
    """Centroids of a regular barycentric subdivision of the simplex.

    N=2: midpoints of `resolution` equal cells of [0, 1].
    N=3: centroids of the resolution^2 congruent triangles tiling the
    simplex (upward and downward), all with equal area, so midpoint-rule
    weights are uniform.
    """
    r = resolution
    if n == 2:
        x = (np.arange(r) + 0.5) / r
        return np.column_stack([x, 1.0 - x])
    u, v = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
    up = u + v <= r - 1
    down = u + v <= r - 2
    xs = np.concatenate([(u[up] + 1.0 / 3.0), (u[down] + 2.0 / 3.0)]) / r
    ys = np.concatenate([(v[up] + 1.0 / 3.0), (v[down] + 2.0 / 3.0)]) / r
    return np.column_stack([xs, ys, 1.0 - xs - ys])


def _grid_means(probs: np.ndarray, alpha: np.ndarray, resolution: int) -> np.ndarray:
    points = _grid_points(probs.shape[1], resolution)
    logp = np.log(points @ probs.T).sum(axis=1)
    logp += ((alpha - 1.0) * np.log(points)).sum(axis=1)
    w = np.exp(logp - logp.max())
    return (w[:, None] * points).sum(axis=0) / w.sum()


def grid_oracle(lm, resolution: int = 200, alpha=1.0) -> GridOracleResult:
    """Posterior means by direct numerical integration over the simplex.

    Deliberately limited to N in {2, 3}, where a regular grid is cheap and
    the quadrature error (estimated against half resolution) is far below
    the MCMC tolerance. Independent of the sampler: no shared code path.
    """
    probs = _as_probs(lm)
    n = probs.shape[1]
    if n not in (2, 3):
        raise InferenceError(f"grid oracle supports 2 or 3 intentions, got {n}")
    if resolution < MIN_GRID_RESOLUTION:
        raise InferenceError(f"resolution must be >= {MIN_GRID_RESOLUTION}, got {resolution}")
    alpha = _resolve_alpha(alpha, n)
    means = _grid_means(probs, alpha, resolution)
    coarse = _grid_means(probs, alpha, resolution // 2)
    return GridOracleResult(means=means, error=np.abs(means - coarse), resolution=resolution)


# -- export -------------------------------------------------------------------


def posterior_to_json(
    posterior: IntentionPosterior,
    cfg: InferenceConfig | None = None,
    intentions: tuple[str, ...] | None = None,
) -> dict:
    """JSON-ready posterior summary: config echo, per-intention statistics,
    per-chain acceptance, convergence flag."""

    def scalar(x):
        return None if np.isnan(x) else float(x)

    s = posterior.summary
    names = intentions or tuple(str(i) for i in range(s.n_intentions))
    doc: dict = {
        "intentions": [
            {
                "intention": names[i],
                "mean": float(s.mean[i]),
                "ci5": float(s.ci5[i]),
                "ci95": float(s.ci95[i]),
                "rhat": scalar(s.rhat[i]),
                "ess": scalar(s.ess[i]),
                "zero_variance": bool(s.zero_variance[i]),
            }
            for i in range(s.n_intentions)
        ],
        "acceptance": [float(a) for a in posterior.acceptance],
        "converged": s.converged,
    }
    if cfg is not None:
        doc["config"] = {
            "chains": cfg.chains,
            "iterations": cfg.iterations,
            "warmup": cfg.warmup,
            "alpha": list(np.atleast_1d(np.asarray(cfg.alpha, dtype=float))),
            "step_size": cfg.step_size,
            "target_accept": cfg.target_accept,
            "seed": cfg.seed,
        }
    return doc


def draws_to_csv(posterior: IntentionPosterior, intentions: tuple[str, ...] | None = None) -> bytes:
    """Raw retained draws as CSV: one row per draw, one column per intention."""
    n = posterior.draws.shape[2]
    names = intentions or tuple(str(i) for i in range(n))
    out = StringIO()
    out.write(",".join(names) + "\n")
    for row in posterior.draws.reshape(-1, n):
        out.write(",".join(f"{x:.6g}" for x in row) + "\n")
    return out.getvalue().encode("utf-8")
