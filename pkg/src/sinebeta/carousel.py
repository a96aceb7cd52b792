"""Point counting and configuration sampling from the phase family.

The number of points of the Sine_beta process in an interval (a, b] equals
``(alpha_b(inf) - alpha_a(inf)) / 2pi``, where alpha_lambda is the phase
diffusion integrated in :mod:`sinebeta.sde`.  At a finite horizon the phase
has settled into a well of 2pi Z once the drift mass is exhausted, so counts
are read off by nearest-integer rounding, guarded by an explicit freeze
criterion.  Positions inside a window are recovered by bisection in lambda
on a single reused noise path.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import sde
from .sde import TWO_PI, BetaParams, NoisePath

__all__ = [
    "FreezeCriterion",
    "CountResult",
    "PointConfiguration",
    "ResolutionFailure",
    "count_points",
    "count_batch",
    "sample_configuration",
    "log_tangent_path",
    "log_tangent_sde",
    "girsanov_tilted_path",
    "freeze_horizon",
    "counting_grid",
]


class ResolutionFailure(RuntimeError):
    """Bisection produced inconsistent counts at the requested resolution."""


@dataclass(frozen=True)
class FreezeCriterion:
    """When a phase value counts as settled.

    The angle must stay within ``tol_angle`` of a multiple of 2pi for
    ``consecutive`` successive steps, and the remaining drift mass
    ``lambda * exp(-beta t / 4)`` must be below ``tol_drift``.
    """

    tol_angle: float = 0.1
    tol_drift: float = 1e-3
    consecutive: int = 50

    def __post_init__(self) -> None:
        if not (0.0 < self.tol_angle < 0.5 * math.pi):
            raise ValueError("tol_angle must lie in (0, pi/2)")
        if self.tol_drift <= 0.0 or self.consecutive < 1:
            raise ValueError("tol_drift must be positive, consecutive >= 1")


def freeze_horizon(params: BetaParams, lambda_max: float,
                   criterion: FreezeCriterion | None = None) -> float:
    """Horizon after which the drift tail is below the freeze tolerance.

    Extends the engine default so that ``lambda_max * exp(-beta T/4)`` ends
    below ``tol_drift``;  without this the slow-mixing small-beta runs stop
    while a non-negligible fraction of a rotation is still pending.
    """
    criterion = criterion or FreezeCriterion()
    lam = max(abs(lambda_max), 1.0)
    t_drift = (4.0 / params.beta) * math.log(lam / criterion.tol_drift)
    # Slack after drift death so stragglers can settle into a well and the
    # consecutive-step streak can accumulate.  Settling is a multiplicative
    # contraction of the residual angle at a beta-independent rate of roughly
    # e^{-t/4}; 30 time units keeps the never-frozen fraction well below the
    # 1% quality threshold for every beta exercised here.
    return max(sde.default_horizon(params.beta, lambda_max), t_drift + 30.0)


def counting_grid(params: BetaParams, lambda_max: float,
                  criterion: FreezeCriterion | None = None,
                  t_end: float | None = None,
                  step: float | None = None) -> tuple[float, int]:
    """Resolve (t_end, n_steps) defaults for a counting run."""
    if t_end is None:
        t_end = freeze_horizon(params, lambda_max, criterion)
    if step is None:
        step = sde.default_step(lambda_max)
    return t_end, max(1, math.ceil(t_end / step))


@dataclass(frozen=True)
class CountResult:
    """Nearest-integer count with its freeze status."""

    count: int
    frozen: bool
    alpha_terminal: float
    t_end: float


_CHECK_EVERY = 64


def count_batch(params: BetaParams, lambdas, seeds, *,
                criterion: FreezeCriterion | None = None,
                t_end: float | None = None, step: float | None = None,
                antithetic: bool = False, checkpoints=None,
                max_block_floats: int = 20_000_000):
    """Counts at every lambda for a batch of independent replicates.

    Every replicate is integrated to the full horizon and the count read
    off the terminal phase.  Stopping a path the moment the freeze streak
    completes would bias counts low by E[residual at lock] / 2pi (about
    0.2% at the default tolerances): the paths that nearly reach the next
    well and slide back carry a positive residual whose escape excess is
    cut off by the early exit.  The streak is therefore only used for the
    ``frozen`` flag.

    Parameters
    ----------
    lambdas : array_like
        Sorted interval-endpoint values; counts are returned per lambda as
        ``rint(alpha / 2pi)``.
    seeds : array_like of int
        One noise stream per replicate.
    antithetic : bool
        If set, each seed contributes a second replicate driven by the
        negated-conjugate noise (-Re, +Im); rows are interleaved
        (seed0, seed0*, seed1, ...).
    checkpoints : array_like of float, optional
        Absolute times at which to snapshot the phase.

    Returns
    -------
    counts : int64 array, (n_replicates, n_lambda)
    frozen : bool array, (n_replicates,)
    snaps : float array (n_replicates, n_lambda, n_checkpoints), only when
        checkpoints were requested.
    """
    criterion = criterion or FreezeCriterion()
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if np.any(np.diff(lambdas) < 0):
        raise ValueError("lambdas must be sorted ascending")
    seeds = np.asarray(seeds, dtype=np.uint64)
    lam_max = float(np.max(np.abs(lambdas))) if lambdas.size else 0.0
    t_end, n_steps = counting_grid(params, lam_max, criterion, t_end, step)
    grid = np.linspace(0.0, t_end, n_steps + 1)
    dF = np.diff(params.drift_mass(grid))
    drift = dF[:, None] * lambdas[None, :]
    # first step index from which the drift tail is below tolerance
    tail = lam_max * np.exp(-0.25 * params.beta * grid[:-1])
    dead = int(np.searchsorted(-tail, -criterion.tol_drift))
    snap_idx = None
    if checkpoints is not None:
        snap_idx = np.asarray(
            [int(round(t / (t_end / n_steps))) for t in np.atleast_1d(checkpoints)])
        if np.any(snap_idx < 0) or np.any(snap_idx > n_steps):
            raise ValueError("checkpoints must lie within [0, t_end]")

    n_rep = len(seeds) * (2 if antithetic else 1)
    nl = lambdas.size
    out_alpha = np.empty((n_rep, nl))
    out_frozen = np.zeros(n_rep, dtype=bool)
    snaps = (np.empty((n_rep, nl, len(snap_idx))) if snap_idx is not None else None)
    block = max(64, max_block_floats // max(1, n_steps))

    for lo in range(0, len(seeds), block):
        sub = seeds[lo:lo + block]
        x, y = sde.batch_noise(sub, t_end, n_steps)
        if antithetic:
            x = np.repeat(x, 2, axis=0)
            y = np.repeat(y, 2, axis=0)
            x[1::2] *= -1.0
        b = x.shape[0]
        row0 = lo * (2 if antithetic else 1)
        alpha = np.zeros((b, nl))
        streak = np.zeros(b, dtype=np.int32)
        frozen = np.zeros(b, dtype=bool)
        cos_b = np.empty_like(alpha)
        sin_b = np.empty_like(alpha)
        for k in range(n_steps):
            np.cos(alpha, out=cos_b)
            np.sin(alpha, out=sin_b)
            cos_b -= 1.0
            cos_b *= x[:, k:k + 1]
            sin_b *= y[:, k:k + 1]
            alpha += drift[k]
            alpha += cos_b
            alpha += sin_b
            if k >= dead:
                resid = alpha - TWO_PI * np.rint(alpha / TWO_PI)
                locked = (np.abs(resid) < criterion.tol_angle).all(axis=1)
                streak[locked] += 1
                streak[~locked] = 0
                frozen |= streak >= criterion.consecutive
            if snaps is not None and (k + 1) in snap_idx:
                for c in np.flatnonzero(snap_idx == k + 1):
                    snaps[row0:row0 + b, :, c] = alpha
            if (k + 1) % _CHECK_EVERY == 0 and not np.isfinite(alpha).all():
                bad = np.flatnonzero(~np.isfinite(alpha).all(axis=1))[0]
                raise sde.NumericalFailure(
                    f"non-finite state at step {k + 1}", step=k + 1,
                    seed=int(sub[bad // (2 if antithetic else 1)]))
        if not np.isfinite(alpha).all():
            raise sde.NumericalFailure("non-finite terminal state",
                                       step=n_steps)
        if snap_idx is not None and 0 in snap_idx:
            for c in np.flatnonzero(snap_idx == 0):
                snaps[row0:row0 + b, :, c] = 0.0
        out_alpha[row0:row0 + b] = alpha
        out_frozen[row0:row0 + b] = frozen

    counts = np.rint(out_alpha / TWO_PI).astype(np.int64)
    if snaps is not None:
        return counts, out_frozen, snaps
    return counts, out_frozen


def count_points(params: BetaParams, lam: float, seed: int, *,
                 criterion: FreezeCriterion | None = None,
                 t_end: float | None = None,
                 step: float | None = None) -> CountResult:
    """Count points of Sine_beta in (0, lam] for one noise stream.

    The count is read off the terminal phase; the freeze criterion only
    sets the ``frozen`` flag (and ``t_end`` records when the streak first
    completed).  See :func:`count_batch` for why counting at the moment of
    lock would be biased.

    Requires lam >= 0; counts over shifted windows come from differences of
    a family run, see :func:`count_batch`.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    criterion = criterion or FreezeCriterion()
    t_end_r, n_steps = counting_grid(params, lam, criterion, t_end, step)
    alpha = sde.integrate_family(
        params, [lam], sde.generate_noise(seed, t_end_r, n_steps)).values[0]
    grid = np.linspace(0.0, t_end_r, n_steps + 1)
    tail = lam * np.exp(-0.25 * params.beta * grid[1:])
    resid = alpha[1:] - TWO_PI * np.rint(alpha[1:] / TWO_PI)
    ok = (np.abs(resid) < criterion.tol_angle) & (tail < criterion.tol_drift)
    streak = 0
    frozen_at = None
    for j, flag in enumerate(ok):
        streak = streak + 1 if flag else 0
        if streak >= criterion.consecutive:
            frozen_at = j + 1
            break
    a = float(alpha[-1])
    count = int(np.rint(a / TWO_PI))
    if frozen_at is not None:
        return CountResult(count, True, a, float(grid[frozen_at]))
    return CountResult(count, False, a, t_end_r)


@dataclass(frozen=True)
class PointConfiguration:
    """Sorted point locations of one realisation inside a window."""

    window: tuple[float, float]
    points: np.ndarray
    seed: int
    beta: float

    def __post_init__(self) -> None:
        a, b = self.window
        if not a < b:
            raise ValueError("window must satisfy a < b")
        pts = np.asarray(self.points, dtype=float)
        if pts.size and (np.any(np.diff(pts) <= 0)
                         or pts[0] <= a or pts[-1] > b):
            raise ValueError("points must be strictly increasing inside (a, b]")

    def __len__(self) -> int:
        return int(self.points.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "window_start", "window_end", "position"])
            for p in self.points:
                w.writerow([self.seed, _f17(self.window[0]),
                            _f17(self.window[1]), _f17(p)])

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "beta": self.beta,
            "window": [self.window[0], self.window[1]],
            "points": [float(p) for p in self.points],
        })

    @classmethod
    def from_json(cls, text: str) -> "PointConfiguration":
        d = json.loads(text)
        return cls(window=(d["window"][0], d["window"][1]),
                   points=np.asarray(d["points"], dtype=float),
                   seed=d["seed"], beta=d["beta"])


def _f17(x: float) -> str:
    return format(float(x), ".17g")


def sample_configuration(params: BetaParams, window: tuple[float, float],
                         seed: int, *, resolution: float = 1e-4,
                         criterion: FreezeCriterion | None = None) -> PointConfiguration:
    """Locate the points of one realisation inside a window.

    The j-th point is ``inf{lambda : frozen count >= j}``, found by
    simultaneous bisection for all levels.  Every query reuses the single
    noise path drawn for ``seed``, so the sampled configuration is a
    deterministic function of (seed, window, resolution).

    Raises
    ------
    ResolutionFailure
        If the final verification pass sees non-monotone counts, which
        means two points are closer than the requested resolution.
    """
    a, b = window
    if not (a < b and resolution > 0):
        raise ValueError("need a < b and positive resolution")
    criterion = criterion or FreezeCriterion()
    lam_max = max(abs(a), abs(b))
    t_end, n_steps = counting_grid(params, lam_max, criterion)
    noise = sde.generate_noise(seed, t_end, n_steps)

    def counts_at(lams: np.ndarray) -> np.ndarray:
        order = np.argsort(lams, kind="stable")
        traj = sde.integrate_family(params, lams[order], noise)
        c = np.rint(traj.terminal() / TWO_PI).astype(np.int64)
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        return c[inv]

    base = counts_at(np.array([a, b], dtype=float))
    n_pts = int(base[1] - base[0])
    if n_pts < 0:
        raise ResolutionFailure("window counts decreased between endpoints")
    if n_pts == 0:
        return PointConfiguration(window=window, points=np.empty(0),
                                  seed=seed, beta=params.beta)
    levels = np.arange(1, n_pts + 1)
    lo = np.full(n_pts, a)
    hi = np.full(n_pts, b)
    budget = math.ceil(math.log2((b - a) / resolution)) + 5
    for _ in range(budget):
        if np.all(hi - lo <= resolution):
            break
        mids = 0.5 * (lo + hi)
        query = np.concatenate(([a], mids))
        c = counts_at(query)
        inside = c[1:] - c[0]
        ge = inside >= levels
        hi = np.where(ge, mids, hi)
        lo = np.where(ge, lo, mids)
    points = hi.copy()
    verify = counts_at(np.concatenate(([a], points)))
    inside = verify[1:] - verify[0]
    if np.any(np.diff(points) <= 0) or np.any(inside < levels):
        raise ResolutionFailure(
            f"counts inconsistent at resolution {resolution} (seed {seed})")
    return PointConfiguration(window=window, points=points, seed=seed,
                              beta=params.beta)


def log_tangent_path(values: np.ndarray) -> np.ndarray:
    """Map phase values to the log-tangent coordinate.

    R = ln tan({alpha}_{2pi} / 4) with {x}_{2pi} = x - 2pi*floor(x/2pi).
    The well bottom maps to -inf and the approach to the next well to +inf;
    infinities are returned as is (diagnostic coordinate, not integrated).
    """
    frac = np.mod(np.asarray(values, dtype=float), TWO_PI)
    with np.errstate(divide="ignore"):
        return np.log(np.tan(0.25 * frac))


#: Clamp level for the tilted log-tangent state; cosh at this size is still
#: finite but any larger value only reports as the clamp flag.
R_CAP = 25.0


@dataclass(frozen=True)
class TiltedPathResult:
    grid: np.ndarray
    values: np.ndarray
    log_weight: float
    clamped: bool


def _log_cosh(x):
    x = np.abs(x)
    return x - math.log(2.0) + np.log1p(np.exp(-2.0 * x))


def log_tangent_sde(params: BetaParams, lam: float, noise: NoisePath, *,
                    r0: float = 0.0, t_offset: float = 0.0,
                    tilted: bool = False) -> TiltedPathResult:
    """Euler path of the log-tangent SDE, natural or Girsanov-tilted.

    Natural drift:  (lam/2) f(t) cosh R + (1/2) tanh R
    Tilted drift:   (lam/2) f(t) cosh R - (1/2) tanh R

    Both are driven by the real part of the complex increments in ``noise``
    (a standard real Brownian motion).  For the tilted path the accumulated
    Girsanov log-weight is returned, so that E[phi(R)] equals
    E[phi(R_tilted) * exp(log_weight)]:

        log_weight = ln cosh R(T) - ln cosh R(0)
                     - 1/2 int (1 - tanh^2 R) dt
                     - 1/2 int lam f(t) cosh R tanh R dt

    States beyond ``R_CAP`` in modulus are clamped and flagged.
    """
    delta = noise.step
    times = t_offset + noise.grid()
    f = params.drift_profile(times[:-1])
    db = noise.increments.real
    values = np.empty(noise.n_steps + 1)
    values[0] = r0
    r = r0
    quad_diff = 0.0
    quad_drift = 0.0
    clamped = False
    for j in range(noise.n_steps):
        th = math.tanh(r)
        ch = math.cosh(r)
        if tilted:
            quad_diff += (1.0 - th * th) * delta
            quad_drift += lam * f[j] * ch * th * delta
        drift = 0.5 * lam * f[j] * ch + (-0.5 if tilted else 0.5) * th
        r = r + drift * delta + db[j]
        if abs(r) > R_CAP:
            r = math.copysign(R_CAP, r)
            clamped = True
        values[j + 1] = r
    lw = 0.0
    if tilted:
        lw = float(_log_cosh(values[-1]) - _log_cosh(values[0])
                   - 0.5 * quad_diff - 0.5 * quad_drift)
    return TiltedPathResult(grid=times, values=values, log_weight=lw,
                            clamped=clamped)


def girsanov_tilted_path(params: BetaParams, lam: float,
                         noise: NoisePath, *, r0: float = 0.0,
                         t_offset: float = 0.0) -> TiltedPathResult:
    """Tilted log-tangent path with its accumulated log-weight."""
    return log_tangent_sde(params, lam, noise, r0=r0, t_offset=t_offset,
                           tilted=True)
