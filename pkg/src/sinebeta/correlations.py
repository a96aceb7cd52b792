"""Monte Carlo estimation of (truncated) correlations of interval counts.

Each sample is one carousel: the phase family is integrated once per seed
at every interval endpoint, counts are endpoint differences, and product
moments of counts over interval clusters estimate the k-point correlation
integrated over those intervals.  Truncation subtracts the independent
parts, with cross terms always taken from disjoint seed ranges so the
subtraction stays unbiased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import carousel
from .carousel import FreezeCriterion
from .partitions import mobius_truncation_weights
from .sde import BetaParams, TWO_PI

__all__ = [
    "IntervalCluster",
    "CorrelationEstimate",
    "MomentAccumulator",
    "ProductMomentResult",
    "FitResult",
    "CarouselCountSampler",
    "PoissonCountSampler",
    "product_moment",
    "partially_truncated",
    "fully_truncated",
    "fit_decay_exponent",
    "seed_stream",
    "default_r_grid",
    "unit_cluster_pair",
]

#: Default cap on individual interval lengths.
DEFAULT_MAX_LENGTH = 4.0 * math.pi

#: Unfrozen-replicate fraction above which estimates carry a quality warning.
UNFROZEN_WARN = 0.01

_U64 = (1 << 64) - 1


def seed_stream(base_seed: int, start: int, count: int) -> np.ndarray:
    """Replicate seeds base_seed XOR i for i in [start, start + count)."""
    i = np.arange(start, start + count, dtype=np.uint64)
    return np.uint64(base_seed & _U64) ^ i


def default_r_grid(n: int = 4) -> np.ndarray:
    """Geometric separations 4pi * 2^j, commensurate with the period."""
    return 4.0 * math.pi * 2.0 ** np.arange(n)


@dataclass(frozen=True)
class IntervalCluster:
    """Disjoint intervals forming one side of a correlation estimand.

    ``intervals`` holds (start, length) pairs.  A left cluster must lie in
    the non-positive half-line, a right cluster in the non-negative one;
    the right cluster is the one shifted by the separation r at estimation
    time.  Lengths are capped (``max_length``) so a single estimand cannot
    silently request an enormous phase family.
    """

    intervals: tuple[tuple[float, float], ...]
    side: str
    max_length: float = DEFAULT_MAX_LENGTH

    def __post_init__(self) -> None:
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        ivs = tuple((float(s), float(l)) for s, l in self.intervals)
        if not ivs:
            raise ValueError("cluster needs at least one interval")
        for s, l in ivs:
            if not 0.0 < l <= self.max_length:
                raise ValueError(f"interval length {l} outside (0, {self.max_length}]")
            if self.side == "left" and s + l > 1e-12:
                raise ValueError("left cluster must lie in the negative half-line")
            if self.side == "right" and s < -1e-12:
                raise ValueError("right cluster must lie in the positive half-line")
        spans = sorted((s, s + l) for s, l in ivs)
        for (_, b0), (a1, _) in zip(spans, spans[1:]):
            if a1 < b0 - 1e-12:
                raise ValueError("intervals must be pairwise disjoint")
        object.__setattr__(self, "intervals", ivs)

    @property
    def k(self) -> int:
        return len(self.intervals)

    def spans(self, shift: float = 0.0) -> list[tuple[float, float]]:
        return [(s + shift, s + l + shift) for s, l in self.intervals]


def unit_cluster_pair() -> tuple[IntervalCluster, IntervalCluster]:
    """Canonical unit windows: [-1, 0] on the left, [0, 1] on the right."""
    return (IntervalCluster(((-1.0, 1.0),), "left"),
            IntervalCluster(((0.0, 1.0),), "right"))


@dataclass(frozen=True)
class MomentAccumulator:
    """Count, mean and centred second moment; merge is the pooled update."""

    n: int
    mean: float
    m2: float

    @classmethod
    def from_values(cls, values: np.ndarray) -> "MomentAccumulator":
        v = np.asarray(values, dtype=float)
        n = v.size
        mean = float(v.mean()) if n else 0.0
        return cls(n=n, mean=mean, m2=float(((v - mean) ** 2).sum()))

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        n = self.n + other.n
        if n == 0:
            return self
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return MomentAccumulator(n=n, mean=mean, m2=m2)

    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def std_err(self) -> float:
        return math.sqrt(self.variance() / self.n) if self.n > 1 else 0.0


@dataclass(frozen=True)
class CorrelationEstimate:
    """One estimated correlation value with its sampling uncertainty.

    ``n_samples`` counts carousel replicates (an antithetic pair is two).
    Plain moment estimates carry their accumulator and can be merged with
    estimates from disjoint seed ranges; derived (truncated) estimates
    cannot, since their std_err is a delta-method composite.
    """

    value: float
    std_err: float
    n_samples: int
    estimator_tag: str
    quality_warning: bool = False
    acc: MomentAccumulator | None = field(default=None, repr=False, compare=False)

    def merge(self, other: "CorrelationEstimate") -> "CorrelationEstimate":
        if self.estimator_tag != other.estimator_tag:
            raise ValueError("cannot merge estimates with different tags")
        if self.acc is None or other.acc is None:
            raise ValueError("only accumulator-backed estimates can merge")
        acc = self.acc.merge(other.acc)
        return CorrelationEstimate(
            value=acc.mean, std_err=acc.std_err(),
            n_samples=self.n_samples + other.n_samples,
            estimator_tag=self.estimator_tag,
            quality_warning=self.quality_warning or other.quality_warning,
            acc=acc)


class CarouselCountSampler:
    """Joint interval counts from one phase family per seed."""

    def __init__(self, params: BetaParams,
                 criterion: FreezeCriterion | None = None,
                 t_end: float | None = None, step: float | None = None):
        self.params = params
        self.criterion = criterion or FreezeCriterion()
        self.t_end = t_end
        self.step = step

    def interval_counts(self, spans, seeds, *, antithetic: bool = False):
        """Counts per interval, shape (n_replicates, k), and unfrozen fraction."""
        edges = sorted({float(e) for a, b in spans for e in (a, b)})
        lam = np.asarray(edges)
        counts, frozen = carousel.count_batch(
            self.params, lam, seeds, criterion=self.criterion,
            t_end=self.t_end, step=self.step, antithetic=antithetic)
        idx = {e: i for i, e in enumerate(edges)}
        out = np.empty((counts.shape[0], len(spans)), dtype=np.int64)
        for j, (a, b) in enumerate(spans):
            out[:, j] = counts[:, idx[float(b)]] - counts[:, idx[float(a)]]
        return out, 1.0 - float(frozen.mean())


class PoissonCountSampler:
    """Independent Poisson counts; the exactly-uncorrelated null model."""

    def __init__(self, intensity: float = 1.0 / TWO_PI):
        self.intensity = intensity

    def interval_counts(self, spans, seeds, *, antithetic: bool = False):
        lens = np.asarray([b - a for a, b in spans])
        reps = 2 if antithetic else 1
        out = np.empty((len(seeds) * reps, len(spans)), dtype=np.int64)
        for i, s in enumerate(seeds):
            rng = np.random.Generator(np.random.Philox(int(s) & _U64))
            for rep in range(reps):
                out[i * reps + rep] = rng.poisson(self.intensity * lens)
        return out, 0.0


def _as_sampler(obj) -> object:
    return CarouselCountSampler(obj) if isinstance(obj, BetaParams) else obj


def _pair_means(values: np.ndarray, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return values
    return 0.5 * (values[0::2] + values[1::2])


@dataclass(frozen=True)
class ProductMomentResult:
    """Joint product moment with the single-side moments from the same draws."""

    joint: CorrelationEstimate
    mean_left: CorrelationEstimate
    mean_right: CorrelationEstimate


def product_moment(sampler, left: IntervalCluster, right: IntervalCluster,
                   r: float, n_samples: int, seed0: int, *,
                   antithetic: bool = True) -> ProductMomentResult:
    """Estimate E[P1 P2] at separation r, plus E[P1] and E[P2].

    P1 and P2 are products of interval counts over the two clusters (the
    right one shifted by r), all read off the same carousel per replicate.
    Replicate i uses stream seed0 XOR i; with antithetic pairing enabled
    consecutive replicates share a seed and the pair means enter the
    variance, which keeps std_err honest.
    """
    sampler = _as_sampler(sampler)
    if r < 0:
        raise ValueError("separation r must be non-negative")
    spans = left.spans() + right.spans(shift=r)
    n_seeds = n_samples // 2 if antithetic else n_samples
    if n_seeds < 2:
        raise ValueError("need at least 4 samples (2 antithetic pairs)")
    seeds = seed_stream(seed0, 0, n_seeds)
    counts, unfrozen = sampler.interval_counts(spans, seeds,
                                               antithetic=antithetic)
    kl = left.k
    p1 = counts[:, :kl].prod(axis=1).astype(float)
    p2 = counts[:, kl:].prod(axis=1).astype(float)
    warn = unfrozen > UNFROZEN_WARN
    n_rep = counts.shape[0]

    def est(vals):
        acc = MomentAccumulator.from_values(_pair_means(vals, antithetic))
        return CorrelationEstimate(value=acc.mean, std_err=acc.std_err(),
                                   n_samples=n_rep,
                                   estimator_tag="product_moment",
                                   quality_warning=warn, acc=acc)

    return ProductMomentResult(joint=est(p1 * p2), mean_left=est(p1),
                               mean_right=est(p2))


def _split_truncated(sampler, spans_left, spans_right, n_samples: int,
                     seed0: int, antithetic: bool, tag: str) -> CorrelationEstimate:
    """E[P1 P2] - E[P1] E[P2] with three disjoint seed blocks.

    Half the budget estimates the joint moment; a quarter each estimates
    the two marginal means, independently of the joint block and of each
    other, so the product of means is an unbiased estimate of the cross
    term and the delta-method variance has no covariance terms.
    """
    sampler = _as_sampler(sampler)
    per_rep = 2 if antithetic else 1
    n_joint = (n_samples // 2) // per_rep
    n_side = (n_samples // 4) // per_rep
    if n_joint < 2 or n_side < 2:
        raise ValueError("budget too small for the three seed blocks")
    blocks = (seed_stream(seed0, 0, n_joint),
              seed_stream(seed0, n_joint, n_side),
              seed_stream(seed0, n_joint + n_side, n_side))
    kl = len(spans_left)
    unf_tot = 0.0
    n_tot = 0

    counts, unf = sampler.interval_counts(spans_left + spans_right,
                                          blocks[0], antithetic=antithetic)
    joint = MomentAccumulator.from_values(_pair_means(
        counts[:, :kl].prod(axis=1).astype(float)
        * counts[:, kl:].prod(axis=1).astype(float), antithetic))
    unf_tot += unf * counts.shape[0]
    n_tot += counts.shape[0]

    sides = []
    for spans, seeds in ((spans_left, blocks[1]), (spans_right, blocks[2])):
        counts, unf = sampler.interval_counts(spans, seeds,
                                              antithetic=antithetic)
        sides.append(MomentAccumulator.from_values(_pair_means(
            counts.prod(axis=1).astype(float), antithetic)))
        unf_tot += unf * counts.shape[0]
        n_tot += counts.shape[0]

    m1, m2 = sides[0].mean, sides[1].mean
    v1 = sides[0].variance() / sides[0].n
    v2 = sides[1].variance() / sides[1].n
    vj = joint.variance() / joint.n
    value = joint.mean - m1 * m2
    std_err = math.sqrt(vj + m2 * m2 * v1 + m1 * m1 * v2 + v1 * v2)
    return CorrelationEstimate(value=value, std_err=std_err,
                               n_samples=n_tot,
                               estimator_tag=tag,
                               quality_warning=unf_tot / n_tot > UNFROZEN_WARN
                               if n_tot else False)


def partially_truncated(sampler, left: IntervalCluster, right: IntervalCluster,
                        r: float, n_samples: int, seed0: int, *,
                        antithetic: bool = True) -> CorrelationEstimate:
    """Covariance of the cluster products at separation r.

    Estimates E[P1 P2] - E[P1] E[P2] with the cross term computed from seed
    ranges disjoint from the joint block (and from each other), which keeps
    the subtraction free of covariance bias at the price of a slightly
    larger variance constant.
    """
    if r < 0:
        raise ValueError("separation r must be non-negative")
    return _split_truncated(_as_sampler(sampler), left.spans(),
                            right.spans(shift=r), n_samples, seed0,
                            antithetic, "partially_truncated")


def fully_truncated(sampler, spans, n_samples: int, seed0: int, *,
                    antithetic: bool = True) -> CorrelationEstimate:
    """Fully truncated k-point correlation integrated over given intervals.

    Expands over set partitions with weights (-1)^(j-1) (j-1)!; all block
    moments are estimated from one shared sample set and the std_err is the
    delta-method value using the joint covariance of the per-replicate
    block products.  For k = 2 this delegates to the split-block pair
    estimator, so it agrees with :func:`partially_truncated` exactly on
    identical seed plans.
    """
    sampler = _as_sampler(sampler)
    spans = [(float(a), float(b)) for a, b in spans]
    k = len(spans)
    if not 2 <= k <= 8:
        raise ValueError("need between 2 and 8 intervals")
    if k == 2:
        return _split_truncated(sampler, spans[:1], spans[1:], n_samples,
                                seed0, antithetic, "fully_truncated")
    per_rep = 2 if antithetic else 1
    n_seeds = n_samples // per_rep
    if n_seeds < 2:
        raise ValueError("budget too small")
    counts, unfrozen = sampler.interval_counts(
        spans, seed_stream(seed0, 0, n_seeds), antithetic=antithetic)
    fc = counts.astype(float)
    n_rep = fc.shape[0]

    weights = mobius_truncation_weights(k)
    subsets = sorted({b for p, _ in weights for b in p.blocks})
    sub_idx = {b: i for i, b in enumerate(subsets)}
    prods = np.empty((n_rep, len(subsets)))
    for b, i in sub_idx.items():
        prods[:, i] = fc[:, list(b)].prod(axis=1)
    means = prods.mean(axis=0)

    value = 0.0
    grad = np.zeros(len(subsets))
    for p, w in weights:
        term = w * float(np.prod([means[sub_idx[b]] for b in p.blocks]))
        value += term
        for b in p.blocks:
            mb = means[sub_idx[b]]
            partial = (w * float(np.prod(
                [means[sub_idx[c]] for c in p.blocks if c != b])))
            grad[sub_idx[b]] += partial
    proj = _pair_means(prods @ grad, antithetic)
    var = float(np.var(proj, ddof=1)) / proj.size if proj.size > 1 else 0.0
    return CorrelationEstimate(value=value, std_err=math.sqrt(var),
                               n_samples=n_rep,
                               estimator_tag="fully_truncated",
                               quality_warning=unfrozen > UNFROZEN_WARN)


@dataclass(frozen=True)
class FitResult:
    """Weighted log-log decay fit."""

    slope: float
    slope_err: float
    oscillation: bool
    intercept: float


def fit_decay_exponent(points) -> FitResult:
    """Fit |value| ~ C * r^slope by weighted least squares in log-log.

    ``points`` is a sequence of (r, CorrelationEstimate).  Requires at
    least three separations and std_err < |value| / 3 everywhere, otherwise
    the log-transform is meaningless and a ValueError is raised.  Sign
    changes across the grid raise the oscillation flag and the fit then
    describes the envelope |value|.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least three separations")
    r = np.array([float(p[0]) for p in pts])
    v = np.array([p[1].value for p in pts])
    s = np.array([p[1].std_err for p in pts])
    if np.any(r <= 0) or np.any(v == 0.0):
        raise ValueError("separations must be positive and values non-zero")
    if np.any(s >= np.abs(v) / 3.0):
        worst = int(np.argmax(s / np.abs(v)))
        raise ValueError(
            "relative precision insufficient for a log fit: "
            f"std_err/|value| = {s[worst] / abs(v[worst]):.3g} at r = {r[worst]:.6g}")
    oscillation = bool(np.any(np.sign(v) != np.sign(v[0])))
    x = np.log(r)
    y = np.log(np.abs(v))
    sig = np.maximum(s / np.abs(v), 1e-15)
    w = 1.0 / sig ** 2
    wx = np.average(x, weights=w)
    wy = np.average(y, weights=w)
    sxx = float(np.sum(w * (x - wx) ** 2))
    slope = float(np.sum(w * (x - wx) * (y - wy)) / sxx)
    return FitResult(slope=slope, slope_err=math.sqrt(1.0 / sxx),
                     oscillation=oscillation,
                     intercept=float(wy - slope * wx))
