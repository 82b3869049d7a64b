"""Draw eigenvalue configurations from the model measures.

Quadratic potentials use the tridiagonal beta-ensemble construction (one
symmetric eigenproblem per sample, exact for every beta > 0).  General
polynomial potentials fall back to a single-coordinate random-walk
Metropolis chain on the log-density

    log pi(lam) = beta sum_{i<j} log|lam_i - lam_j| - N sum_i V(lam_i),

with step-size adaptation toward a target acceptance rate during burn-in
and fixed-stride thinning afterwards.  All randomness flows through
counter-based Philox generators seeded from a spawning SeedSequence, so
runs are reproducible per (seed, chain) and cheap to parallelize.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .errors import ConfigurationError, InvalidInputError, TuningWarning
from .potentials import Potential

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap if not (args and callable(args[0])) else args[0]


_BLOCK_SWEEPS = 16


@dataclass
class SamplerConfig:
    """Knobs for the Metropolis sampler."""

    chains: int = 4
    burn_sweeps: int = 800
    thin: int | None = None  # sweeps per kept sample; default max(1, N//10)
    target_acceptance: float = 0.4
    initial_step: float | None = None
    adapt_rate: float = 2.0
    threads: int = 1  # worker threads over chains; results do not depend on it

    def resolved_thin(self, N: int) -> int:
        return self.thin if self.thin is not None else max(1, N // 10)


@dataclass
class EigenSample:
    """Sorted eigenvalue configurations with sampling diagnostics."""

    values: np.ndarray  # (n_samples, N), rows ascending
    beta: float
    method: str
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.sort(np.atleast_2d(
            np.asarray(self.values, dtype=float)), axis=1)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


def _quadratic_parts(V: Potential) -> tuple[float, float] | None:
    """(curvature c2, center) if V is quadratic with c2 > 0, else None."""
    c = np.asarray(V.coeffs)
    if V.degree != 2 or c[2] <= 0:
        return None
    return float(c[2]), float(-c[1] / (2 * c[2]))


def sample_gaussian_tridiagonal(V: Potential, N: int, n_samples: int,
                                seed: int) -> EigenSample:
    """Tridiagonal sampler for quadratic V and any beta.

    The tridiagonal model with N(0,1) diagonal and chi_{beta(N-k)}/sqrt(2)
    off-diagonal has eigenvalue density |Delta|^beta exp(-sum lam^2/2) for
    every beta (the beta dependence sits entirely in the chi parameters);
    rescaling by s = 1/sqrt(2 c2 N) and recentering matches e^{-N V} for
    V = c2 (x - x0)^2 + const.
    """
    quad = _quadratic_parts(V)
    if quad is None:
        raise ConfigurationError(
            "tridiagonal sampling needs a quadratic potential with positive "
            f"curvature; got coefficients {list(V.coeffs)}")
    if N < 2 or n_samples < 1:
        raise InvalidInputError("need N >= 2 and at least one sample")
    c2, center = quad
    beta = V.beta
    s = np.sqrt(1.0 / (2.0 * c2 * N))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    dfs = beta * np.arange(N - 1, 0, -1)
    out = np.empty((n_samples, N))
    for k in range(n_samples):
        diag = s * rng.standard_normal(N)
        off = s * np.sqrt(rng.chisquare(dfs)) / np.sqrt(2.0)
        out[k] = eigvalsh_tridiagonal(diag, off)
    return EigenSample(out + center, beta, "tridiagonal", seed)


# ------------------------------------------------------------- Metropolis

@njit(cache=True, nogil=True)
def _sweep_kernel(lam, vcoef, beta, n_weight, sigma, normals, uniforms):
    """Run one block of full sweeps in place; returns accepted move count."""
    C, S, N = normals.shape
    accepted = np.zeros(C, dtype=np.int64)
    for c in range(C):
        for s in range(S):
            for i in range(N):
                old = lam[c, i]
                new = old + sigma[c] * normals[c, s, i]
                # potential difference by Horner evaluation
                pv_new = 0.0
                pv_old = 0.0
                for k in range(len(vcoef) - 1, -1, -1):
                    pv_new = pv_new * new + vcoef[k]
                    pv_old = pv_old * old + vcoef[k]
                delta = -n_weight * (pv_new - pv_old)
                ok = True
                for j in range(N):
                    if j == i:
                        continue
                    dn = new - lam[c, j]
                    if dn == 0.0:
                        ok = False
                        break
                    do = old - lam[c, j]
                    delta += beta * (np.log(abs(dn)) - np.log(abs(do)))
                if ok and np.log(uniforms[c, s, i]) < delta:
                    lam[c, i] = new
                    accepted[c] += 1
    return accepted


def _sweep_python(lam, vcoef, beta, n_weight, sigma, normals, uniforms):
    """Pure-numpy fallback with identical acceptance decisions."""
    C, S, N = normals.shape
    accepted = np.zeros(C, dtype=np.int64)
    for c in range(C):
        for s in range(S):
            for i in range(N):
                old = lam[c, i]
                new = old + sigma[c] * normals[c, s, i]
                dv = np.polyval(vcoef[::-1], new) - np.polyval(vcoef[::-1], old)
                delta = -n_weight * dv
                others = np.delete(lam[c], i)
                dn = np.abs(new - others)
                if np.any(dn == 0.0):
                    continue
                delta += beta * float(
                    np.sum(np.log(dn) - np.log(np.abs(old - others))))
                if np.log(uniforms[c, s, i]) < delta:
                    lam[c, i] = new
                    accepted[c] += 1
    return accepted


def _run_sweeps(lam, vcoef, beta, n_weight, sigma, rngs, n_sweeps):
    """Advance all chains n_sweeps; returns per-chain acceptance fraction."""
    C, N = lam.shape
    kernel = _sweep_kernel if _HAVE_NUMBA else _sweep_python
    total = np.zeros(C, dtype=np.int64)
    done = 0
    while done < n_sweeps:
        S = min(_BLOCK_SWEEPS, n_sweeps - done)
        normals = np.stack([r.standard_normal((S, N)) for r in rngs])
        uniforms = np.stack([r.random((S, N)) for r in rngs])
        total += kernel(lam, vcoef, beta, n_weight, sigma, normals, uniforms)
        done += S
    return total / float(n_sweeps * N)


def batch_means_ess(trace: np.ndarray) -> float:
    """Effective sample size of a scalar trace by the batch-means ratio."""
    trace = np.asarray(trace, dtype=float)
    K = len(trace)
    if K < 16:
        return float(K)
    nb = int(np.sqrt(K))
    bs = K // nb
    means = trace[: nb * bs].reshape(nb, bs).mean(axis=1)
    var_proc = bs * np.var(means, ddof=1)
    var_iid = np.var(trace, ddof=1)
    if var_proc <= 0:
        return float(K)
    return float(K * var_iid / var_proc)


def sample_mcmc(V: Potential, N: int, n_samples: int, seed: int,
                config: SamplerConfig | None = None,
                initial: np.ndarray | None = None) -> EigenSample:
    """Metropolis sampling of the model measure for a general potential.

    Chains start from jittered equilibrium quantiles, adapt their step
    during burn-in, then record one configuration every `thin` sweeps.
    """
    V.require_confining("sampling potential")
    if N < 2 or n_samples < 1:
        raise InvalidInputError("need N >= 2 and at least one sample")
    cfg = config or SamplerConfig()
    beta = V.beta
    thin = cfg.resolved_thin(N)
    C = min(cfg.chains, n_samples)
    ss = np.random.SeedSequence(seed)
    rngs = [np.random.Generator(np.random.Philox(child))
            for child in ss.spawn(C)]
    if initial is None:
        from .equilibrium import solve_equilibrium

        mu = solve_equilibrium(V)
        q = mu.quantile((np.arange(N) + 0.5) / N)
        width = mu.r
    else:
        q = np.sort(np.asarray(initial, dtype=float))
        width = 0.5 * (q[-1] - q[0]) if q[-1] > q[0] else 1.0
    lam = np.stack([q + 1e-3 * width / N * r.standard_normal(N)
                    for r in rngs])
    vcoef = np.asarray(V.coeffs, dtype=float)
    sigma = np.full(C, cfg.initial_step if cfg.initial_step is not None
                    else 2.0 * width / N)
    # Each chain burns in with decaying step adaptation, then records one
    # configuration every `thin` sweeps.  Chains touch disjoint state and
    # private RNG streams, so running them on worker threads changes
    # nothing about the output.
    adapt_blocks = max(1, cfg.burn_sweeps // _BLOCK_SWEEPS)
    counts = [len(range(c, n_samples, C)) for c in range(C)]

    def run_chain(c: int):
        rate = cfg.target_acceptance
        for k in range(adapt_blocks):
            rate = _run_sweeps(lam[c:c + 1], vcoef, beta, float(N),
                               sigma[c:c + 1], rngs[c:c + 1],
                               _BLOCK_SWEEPS)[0]
            sigma[c] *= np.exp(cfg.adapt_rate
                               * (rate - cfg.target_acceptance)
                               / (k + 1) ** 0.6)
        kept = np.empty((counts[c], N))
        acc_sum = 0.0
        for k in range(counts[c]):
            acc_sum += _run_sweeps(lam[c:c + 1], vcoef, beta, float(N),
                                   sigma[c:c + 1], rngs[c:c + 1], thin)[0]
            kept[k] = lam[c]
        return rate, kept, acc_sum

    if cfg.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run_chain, range(C)))
    else:
        results = [run_chain(c) for c in range(C)]
    rate = np.array([r[0] for r in results])
    if np.any(rate < 0.1) or np.any(rate > 0.8):
        warnings.warn(
            f"acceptance rates {np.round(rate, 3)} far from target "
            f"{cfg.target_acceptance} after burn-in", TuningWarning)
    # reassemble in round-robin draw order
    keep = np.empty((n_samples, N))
    for k in range(n_samples):
        keep[k] = results[k % C][1][k // C]
    ess = min(batch_means_ess((r[1] ** 2).sum(axis=1)) for r in results)
    diagnostics = {
        "acceptance": [r[2] / max(n, 1) for r, n in zip(results, counts)],
        "step": sigma.tolist(),
        "min_ess": float(ess),
        "thin": thin,
        "chains": C,
    }
    return EigenSample(keep, beta, "mcmc", seed, diagnostics)


def sample_spectra(V: Potential, N: int, n_samples: int, seed: int,
                   method: str = "auto",
                   config: SamplerConfig | None = None) -> EigenSample:
    """Dispatch to the exact tridiagonal sampler when V allows it."""
    if method not in ("auto", "tridiagonal", "mcmc"):
        raise ConfigurationError(f"unknown sampling method '{method}'")
    if method == "tridiagonal" or (method == "auto"
                                   and _quadratic_parts(V) is not None):
        return sample_gaussian_tridiagonal(V, N, n_samples, seed)
    return sample_mcmc(V, N, n_samples, seed, config=config)
