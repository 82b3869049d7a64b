"""Local spectral statistics and two-ensemble comparisons.

Bulk statistics are rescaled gaps N (lam_{i+k} - lam_i) at a fixed order
index; edge statistics are inward-positive N^{2/3} distances of extreme
eigenvalues to the equilibrium support endpoints.  Ensembles are compared
with the two-sample Kolmogorov-Smirnov distance and the 1-Wasserstein
distance, both with bootstrap standard errors, and judged against a
Monte-Carlo null quantile of the KS statistic (which is distribution-free,
so uniform draws calibrate it for any continuous law).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp, wasserstein_distance

from .errors import InvalidInputError
from .samplers import EigenSample


def _as_rows(sample) -> np.ndarray:
    values = sample.values if isinstance(sample, EigenSample) else sample
    rows = np.atleast_2d(np.asarray(values, dtype=float))
    if not np.all(np.diff(rows, axis=1) >= 0):
        rows = np.sort(rows, axis=1)
    return rows


@dataclass
class GapStatistic:
    """Rescaled bulk gaps N (lam_{i+k} - lam_i), one column per order k."""

    index: int  # 1-based bulk position i
    orders: tuple[int, ...]
    values: np.ndarray  # (n_samples, len(orders))

    def order(self, k: int) -> np.ndarray:
        return self.values[:, self.orders.index(k)]


@dataclass
class EdgeStatistic:
    """Inward-positive rescaled edge distances N^{2/3} * dist to endpoint."""

    k: int  # 1-based order from the edge
    side: str  # "left" or "right"
    values: np.ndarray


def bulk_gaps(sample, index: int, orders=(1,)) -> GapStatistic:
    """Gaps from the index-th smallest eigenvalue (1-based), rescaled by N."""
    rows = _as_rows(sample)
    n, N = rows.shape
    orders = tuple(int(k) for k in orders)
    if index < 1 or index + max(orders) > N:
        raise InvalidInputError(
            f"gap index {index} with orders {orders} outside 1..{N}")
    base = rows[:, index - 1]
    cols = [N * (rows[:, index - 1 + k] - base) for k in orders]
    return GapStatistic(index, orders, np.stack(cols, axis=1))


def edge_values(sample, support, k: int = 1, side: str = "right") -> EdgeStatistic:
    """N^{2/3}-rescaled distance of the k-th extreme eigenvalue to the edge.

    Both sides are oriented inward, so typical values are positive and the
    two edges of a symmetric model share one limiting law.
    """
    rows = _as_rows(sample)
    n, N = rows.shape
    a, b = map(float, support)
    if not 1 <= k <= N:
        raise InvalidInputError(f"edge order {k} outside 1..{N}")
    if side == "left":
        vals = N ** (2.0 / 3.0) * (rows[:, k - 1] - a)
    elif side == "right":
        vals = N ** (2.0 / 3.0) * (b - rows[:, N - k])
    else:
        raise InvalidInputError(f"side must be 'left' or 'right', got {side!r}")
    return EdgeStatistic(k, side, vals)


def rescale_gaps(gaps: np.ndarray, factor) -> np.ndarray:
    """Multiply gap values by a local scale factor (e.g. a map derivative).

    The factor may be a scalar or an array broadcasting against the gaps,
    one entry per configuration.
    """
    factor = np.asarray(factor, dtype=float)
    if not np.all(np.isfinite(factor)) or np.any(factor <= 0):
        raise InvalidInputError("gap rescaling factors must be finite and > 0")
    return np.asarray(gaps, dtype=float) * factor


@dataclass
class ComparisonReport:
    """Distances between two scalar samples with bootstrap errors."""

    name: str
    n_a: int
    n_b: int
    ks: float
    ks_se: float
    ks_pvalue: float
    wasserstein: float
    wasserstein_se: float
    threshold: float | None = None

    @property
    def passed(self) -> bool | None:
        if self.threshold is None:
            return None
        return self.ks <= self.threshold

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "ks": self.ks,
            "ks_se": self.ks_se,
            "ks_pvalue": self.ks_pvalue,
            "wasserstein": self.wasserstein,
            "wasserstein_se": self.wasserstein_se,
        }
        if self.threshold is not None:
            d["threshold"] = self.threshold
            d["passed"] = bool(self.passed)
        return d


def compare_distributions(a, b, name: str = "statistic", n_boot: int = 200,
                          seed: int = 0,
                          threshold: float | None = None) -> ComparisonReport:
    """KS and Wasserstein distances of two samples, with bootstrap SEs."""
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    if len(a) < 2 or len(b) < 2:
        raise InvalidInputError("need at least two values per sample")
    ks_res = ks_2samp(a, b, method="asymp")
    w1 = wasserstein_distance(a, b)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    ks_boot = np.empty(n_boot)
    w_boot = np.empty(n_boot)
    for i in range(n_boot):
        ra = a[rng.integers(0, len(a), len(a))]
        rb = b[rng.integers(0, len(b), len(b))]
        ks_boot[i] = ks_2samp(ra, rb, method="asymp").statistic
        w_boot[i] = wasserstein_distance(ra, rb)
    return ComparisonReport(
        name, len(a), len(b),
        float(ks_res.statistic), float(np.std(ks_boot, ddof=1)),
        float(ks_res.pvalue),
        float(w1), float(np.std(w_boot, ddof=1)),
        threshold,
    )


def ks_null_quantile(n_a: int, n_b: int, q: float = 0.99,
                     n_draws: int = 2000, seed: int = 1234) -> float:
    """Monte-Carlo q-quantile of the two-sample KS distance under the null.

    The statistic is distribution-free for continuous laws, so uniform
    samples calibrate the threshold exactly.
    """
    if not 0 < q < 1:
        raise InvalidInputError(f"quantile level must be in (0,1), got {q}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    stats = np.empty(n_draws)
    for i in range(n_draws):
        a = np.sort(rng.random(n_a))
        b = np.sort(rng.random(n_b))
        # KS distance between the two empirical CDFs on the pooled grid
        pooled = np.concatenate([a, b])
        ca = np.searchsorted(a, pooled, side="right") / n_a
        cb = np.searchsorted(b, pooled, side="right") / n_b
        stats[i] = np.max(np.abs(ca - cb))
    return float(np.quantile(stats, q))


@dataclass
class UniversalityResult:
    """Outcome of one mapped-versus-direct local statistics experiment."""

    beta: float
    N: int
    n_samples: int
    threshold: float
    reports: dict = field(default_factory=dict)
    # raw paired statistic values per report key, for plotting; not serialized
    samples: dict = field(default_factory=dict, repr=False)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.reports.values()
                   if r.threshold is not None)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "N": self.N,
            "n_samples": self.n_samples,
            "threshold": self.threshold,
            "all_passed": self.all_passed,
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
        }


def compare_local_statistics(mapped, direct, target_support,
                             gap_index: int | None = None,
                             gap_orders=(1, 2), edge_orders=(1,),
                             n_boot: int = 200, seed: int = 0,
                             quantile: float = 0.99,
                             threshold: float | None = None) -> UniversalityResult:
    """Compare bulk and edge statistics of two ensembles of equal shape.

    `mapped` and `direct` are (n_samples, N) arrays (or EigenSamples) in
    the same coordinates; `target_support` locates the spectral edges.
    """
    rows_m = _as_rows(mapped)
    rows_d = _as_rows(direct)
    if rows_m.shape[1] != rows_d.shape[1]:
        raise InvalidInputError(
            f"eigenvalue counts differ: {rows_m.shape[1]} vs {rows_d.shape[1]}")
    N = rows_m.shape[1]
    if gap_index is None:
        gap_index = N // 2
    if threshold is None:
        threshold = ks_null_quantile(rows_m.shape[0], rows_d.shape[0],
                                     q=quantile)
    beta = mapped.beta if isinstance(mapped, EigenSample) else float("nan")
    result = UniversalityResult(beta, N, rows_m.shape[0], threshold)
    if gap_orders:
        gm = bulk_gaps(rows_m, gap_index, gap_orders)
        gd = bulk_gaps(rows_d, gap_index, gap_orders)
        for k in gap_orders:
            result.reports[f"gap_k{k}"] = compare_distributions(
                gm.order(k), gd.order(k), name=f"bulk gap order {k}",
                n_boot=n_boot, seed=seed + k, threshold=threshold)
            result.samples[f"gap_k{k}"] = (gm.order(k), gd.order(k))
    for k in edge_orders:
        for side in ("left", "right"):
            em = edge_values(rows_m, target_support, k, side)
            ed = edge_values(rows_d, target_support, k, side)
            result.reports[f"edge_{side}_k{k}"] = compare_distributions(
                em.values, ed.values, name=f"{side} edge order {k}",
                n_boot=n_boot, seed=seed + 100 * k + (7 if side == "left" else 13),
                threshold=threshold)
            result.samples[f"edge_{side}_k{k}"] = (em.values, ed.values)
    return result


def universality_experiment(V, W, N: int, n_samples: int, seed: int,
                            include_correction: bool = True,
                            method: str = "auto", sampler_config=None,
                            gap_index: int | None = None, gap_orders=(1, 2),
                            edge_orders=(1,), n_boot: int = 200,
                            quantile: float = 0.99, tmap=None,
                            n_time: int = 17) -> UniversalityResult:
    """Map source samples to the target model and compare local statistics.

    Source configurations are sampled under V, pushed through the
    approximate transport map for V -> V + W, and compared against
    configurations sampled directly under V + W.  Sub-seeds for the two
    samplers and the bootstrap are spawned from `seed`.
    """
    from .flow import apply_map, build_transport_map
    from .potentials import interpolate
    from .samplers import sample_spectra
    from .transport_fields import build_field_set

    ss = np.random.SeedSequence(seed)
    sub = [int(c.generate_state(1)[0] % (2 ** 31)) for c in ss.spawn(3)]
    if tmap is None:
        fields = build_field_set(V, W, n_time=n_time)
        tmap = build_transport_map(fields)
    source = sample_spectra(V, N, n_samples, sub[0], method=method,
                            config=sampler_config)
    mapped = apply_map(tmap, source.values,
                       include_correction=include_correction)
    direct = sample_spectra(interpolate(V, W, 1.0), N, n_samples, sub[1],
                            method=method, config=sampler_config)
    linv = tmap.rescaling.inverse()
    src_mu = tmap.fields.source_measure
    target_support = (float(linv(src_mu.a)), float(linv(src_mu.b)))
    result = compare_local_statistics(
        mapped.values, direct, target_support, gap_index=gap_index,
        gap_orders=gap_orders, edge_orders=edge_orders, n_boot=n_boot,
        seed=sub[2], quantile=quantile)
    result.beta = V.beta
    return result


def compare_rescaled_statistics(tmap, source, direct,
                                gap_index: int | None = None,
                                gap_orders=(1, 2), edge_orders=(1,),
                                n_boot: int = 200, seed: int = 0,
                                quantile: float = 0.99,
                                threshold: float | None = None,
                                beta: float = float("nan")) -> UniversalityResult:
    """Derivative-rescaled source statistics against direct target samples.

    Instead of transporting configurations, local statistics of `source`
    (drawn under the source model) are multiplied by the transport-map
    derivative at the relevant location (the gap base eigenvalue, or the
    support edge) and compared with the same statistics of `direct` (drawn
    under the target model).
    """
    rows_s = _as_rows(source)
    rows_d = _as_rows(direct)
    N = rows_s.shape[1]
    if gap_index is None:
        gap_index = N // 2
    if threshold is None:
        threshold = ks_null_quantile(rows_s.shape[0], rows_d.shape[0],
                                     q=quantile)
    if isinstance(source, EigenSample):
        beta = source.beta
    src_mu = tmap.fields.source_measure
    linv = tmap.rescaling.inverse()
    source_support = (src_mu.a, src_mu.b)
    target_support = (float(linv(src_mu.a)), float(linv(src_mu.b)))
    result = UniversalityResult(beta, N, rows_s.shape[0], threshold)
    if gap_orders:
        gs = bulk_gaps(rows_s, gap_index, gap_orders)
        gd = bulk_gaps(rows_d, gap_index, gap_orders)
        base_deriv = tmap.derivative(rows_s[:, gap_index - 1])
        for k in gap_orders:
            ga = rescale_gaps(gs.order(k), base_deriv)
            result.reports[f"gap_k{k}"] = compare_distributions(
                ga, gd.order(k), name=f"rescaled bulk gap order {k}",
                n_boot=n_boot, seed=seed + k, threshold=threshold)
            result.samples[f"gap_k{k}"] = (ga, gd.order(k))
    for k in edge_orders:
        for side, edge_pt in (("left", src_mu.a), ("right", src_mu.b)):
            es = edge_values(rows_s, source_support, k, side)
            ed = edge_values(rows_d, target_support, k, side)
            factor = float(tmap.derivative(edge_pt))
            ea = rescale_gaps(es.values, factor)
            result.reports[f"edge_{side}_k{k}"] = compare_distributions(
                ea, ed.values, name=f"rescaled {side} edge order {k}",
                n_boot=n_boot,
                seed=seed + 100 * k + (7 if side == "left" else 13),
                threshold=threshold)
            result.samples[f"edge_{side}_k{k}"] = (ea, ed.values)
    return result


def rescaled_statistics_experiment(V, W, N: int, n_samples: int, seed: int,
                                   method: str = "auto", sampler_config=None,
                                   gap_index: int | None = None,
                                   gap_orders=(1, 2), edge_orders=(1,),
                                   n_boot: int = 200, quantile: float = 0.99,
                                   tmap=None,
                                   n_time: int = 17) -> UniversalityResult:
    """Sample both models and compare derivative-rescaled local statistics."""
    from .flow import build_transport_map
    from .potentials import interpolate
    from .samplers import sample_spectra
    from .transport_fields import build_field_set

    ss = np.random.SeedSequence(seed)
    sub = [int(c.generate_state(1)[0] % (2 ** 31)) for c in ss.spawn(3)]
    if tmap is None:
        fields = build_field_set(V, W, n_time=n_time)
        tmap = build_transport_map(fields)
    source = sample_spectra(V, N, n_samples, sub[0], method=method,
                            config=sampler_config)
    direct = sample_spectra(interpolate(V, W, 1.0), N, n_samples, sub[1],
                            method=method, config=sampler_config)
    return compare_rescaled_statistics(
        tmap, source, direct, gap_index=gap_index, gap_orders=gap_orders,
        edge_orders=edge_orders, n_boot=n_boot, seed=sub[2],
        quantile=quantile, beta=V.beta)
