"""Acceptance validation suite.

Each criterion_* function runs one numbered acceptance check end to end
and returns a CriterionResult; the CLI --validate flag and the test suite
both call these functions, so there is exactly one definition of what
passing means.  Sample sizes scale with the SINEBETA_ACCEPT_SCALE
environment variable (default 1.0) for quick smoke runs; tolerances never
scale.
"""

from __future__ import annotations

import hashlib
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from . import carousel, correlations, coupling, experiments, oracles, partitions, sde
from .correlations import (CorrelationEstimate, fit_decay_exponent,
                           partially_truncated, seed_stream,
                           unit_cluster_pair)
from .coupling import HermitianBlockCov
from .experiments import ExperimentConfig, phase_matched_grid
from .sde import BetaParams, TWO_PI

__all__ = ["CriterionResult", "run_all", "format_report", "CRITERIA"]

#: Base seed for the whole suite; criterion k perturbs it in the high bits.
SUITE_SEED = 0x51BE7A


@dataclass(frozen=True)
class CriterionResult:
    index: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    wall_time_s: float = 0.0


def _scale() -> float:
    try:
        return float(os.environ.get("SINEBETA_ACCEPT_SCALE", "1.0"))
    except ValueError:
        return 1.0


def _n(base: int, minimum: int = 400) -> int:
    return max(minimum, int(round(base * _scale())))


def _seed(criterion_index: int, sub: int = 0) -> int:
    return SUITE_SEED ^ (criterion_index << 56) ^ (sub << 48)


def _timed(idx, name, fn):
    t0 = time.monotonic()
    passed, detail, metrics = fn()
    return CriterionResult(index=idx, name=name, passed=passed,
                           detail=detail, metrics=metrics,
                           wall_time_s=time.monotonic() - t0)


# --- criterion 1 -----------------------------------------------------------

def criterion_intensity() -> CriterionResult:
    """Mean count on [0, 2pi] equals 1 within 3 std errors, three betas."""
    def body():
        n = _n(100_000)
        lam = TWO_PI
        parts = []
        ok = True
        metrics = {}
        for i, beta in enumerate((0.5, 2.0, 8.0)):
            t0 = time.monotonic()
            counts, frozen = carousel.count_batch(
                BetaParams(beta), np.array([lam]),
                seed_stream(_seed(1, i), 0, n))
            mean = float(counts[:, 0].mean())
            se = float(counts[:, 0].std(ddof=1) / math.sqrt(n))
            z = (mean - 1.0) / se
            dt = time.monotonic() - t0
            ok &= abs(z) <= 3.0
            parts.append(f"beta={beta}: mean={mean:.4f} se={se:.4f} "
                         f"z={z:+.2f} unfrozen={1 - frozen.mean():.2%} "
                         f"[{dt:.0f}s]")
            metrics[f"beta_{beta}"] = {"mean": mean, "std_err": se, "z": z,
                                       "seconds": dt}
        return ok, "; ".join(parts), metrics
    return _timed(1, "intensity", body)


# --- criterion 2 -----------------------------------------------------------

def criterion_beta2_oracle() -> CriterionResult:
    """Truncated two-point estimates match the sine-kernel quadrature."""
    def body():
        n = _n(200_000)
        left, right = unit_cluster_pair()
        params = BetaParams(2.0)
        parts = []
        ok = True
        metrics = {}
        for i, r in enumerate((2.0 * math.pi, 4.0 * math.pi, 8.0 * math.pi)):
            est = partially_truncated(params, left, right, r, n, _seed(2, i))
            ref = oracles.rho2_truncated_beta2_integrated((-1.0, 0.0),
                                                          (r, r + 1.0))
            z = (est.value - ref) / est.std_err
            ok &= abs(z) <= 3.0 and not est.quality_warning
            parts.append(f"r={r:.3f}: est={est.value:+.2e} "
                         f"oracle={ref:+.2e} z={z:+.2f}")
            metrics[f"r_{i}"] = {"r": r, "value": est.value,
                                 "std_err": est.std_err, "oracle": ref,
                                 "z": z}
        return ok, "; ".join(parts), metrics
    return _timed(2, "beta2_oracle", body)


# --- criterion 3 -----------------------------------------------------------

def criterion_beta2_decay() -> CriterionResult:
    """Log-log decay slope -2 +- 0.3 over r in {4pi, 8pi, 16pi, 32pi}.

    The fit precondition (std_err < |value|/3 at every r) sets the sample
    budget.  The integrated truncated correlation over unit windows falls
    off like r^{-2} while the per-sample noise of the count-product
    estimator is r-independent, so the required replicate count grows like
    r^4; the outer separations sit far beyond any desk-scale budget.  The
    criterion runs faithfully and reports the shortfall instead of
    substituting a weaker check; estimator correctness at these r is
    covered by the per-point z-scores against the quadrature oracle.
    """
    def body():
        n = _n(40_000)
        left, right = unit_cluster_pair()
        params = BetaParams(2.0)
        pts = []
        parts = []
        metrics = {"n_per_r": n, "points": []}
        for i, r in enumerate(correlations.default_r_grid()):
            est = partially_truncated(params, left, right, float(r), n,
                                      _seed(3, i))
            ref = oracles.rho2_truncated_beta2_integrated((-1.0, 0.0),
                                                          (float(r), float(r) + 1.0))
            z = (est.value - ref) / est.std_err if est.std_err else math.inf
            rel = est.std_err / abs(ref)
            n_req = int((3.0 * est.std_err * math.sqrt(est.n_samples)
                         / abs(ref)) ** 2)
            pts.append((float(r), est))
            parts.append(f"r={float(r):.1f}: z={z:+.2f} "
                         f"se/|oracle|={rel:.1f} n_for_fit~{n_req:.1e}")
            metrics["points"].append(
                {"r": float(r), "value": est.value, "std_err": est.std_err,
                 "oracle": ref, "z": z, "n_required": n_req})
        oracle_pts = [(r, CorrelationEstimate(
            value=oracles.rho2_truncated_beta2_integrated(
                (-1.0, 0.0), (r, r + 1.0)),
            std_err=0.0, n_samples=1, estimator_tag="oracle"))
            for r, _ in pts]
        oracle_fit = fit_decay_exponent(oracle_pts)
        metrics["oracle_slope"] = oracle_fit.slope
        try:
            fit = fit_decay_exponent(pts)
        except ValueError as exc:
            detail = ("fit precondition unmet at this budget: "
                      + "; ".join(parts)
                      + f"; oracle-values slope={oracle_fit.slope:.3f} "
                      "(quadrature cross-check)")
            return False, detail, metrics
        ok = abs(fit.slope + 2.0) <= 0.3
        metrics["slope"] = fit.slope
        metrics["slope_err"] = fit.slope_err
        return ok, (f"slope={fit.slope:.3f}+-{fit.slope_err:.3f}; "
                    + "; ".join(parts)), metrics
    return _timed(3, "beta2_decay_slope", body)


# --- criterion 4 -----------------------------------------------------------

def criterion_euler_order() -> CriterionResult:
    """Self-convergence slope in [0.35, 0.65] and RMS below the L2 bound."""
    def body():
        cfg = ExperimentConfig(kind="euler_convergence", beta=2.0,
                               n_samples=_n(4000), base_seed=_seed(4),
                               options={"lam": 2.0})
        rows, partial = experiments._chunk_euler(cfg, 0)
        slope = partial["slope"]
        below = partial["below_bound"]
        ok = 0.35 <= slope <= 0.65 and below
        detail = (f"slope={slope:.3f} (target [0.35, 0.65]); "
                  f"RMS^2 below closed-form bound at all deltas: {below}; "
                  + "; ".join(f"delta=1/{round(1/row[2])}: rms={row[3]:.3e}"
                              for row in rows))
        return ok, detail, {"slope": slope, "below_bound": below,
                            "rows": [list(r) for r in rows]}
    return _timed(4, "euler_order", body)


# --- criterion 5 -----------------------------------------------------------

def criterion_hellinger() -> CriterionResult:
    """Closed-form Hellinger equals density quadrature to 1e-6."""
    def body():
        rng = sde._generator(_seed(5))
        worst = 0.0
        for _ in range(100):
            delta = rng.uniform(0.01, 0.2)
            mod = rng.uniform(0.0, 0.999) * delta
            phase = rng.uniform(0.0, TWO_PI)
            kap = mod * complex(math.cos(phase), math.sin(phase))
            sx = HermitianBlockCov.from_blocks(
                np.array([[2 * delta, kap], [np.conj(kap), 2 * delta]]))
            sy = HermitianBlockCov.from_blocks(
                np.array([[2 * delta, 0.0], [0.0, 2 * delta]]))
            closed = coupling.hellinger_complex_gaussian(sx, sy)
            ref = coupling.hellinger_quadrature(sx, sy)
            worst = max(worst, abs(closed - ref))
        ok = worst < 1e-6
        return ok, f"max |closed - quadrature| = {worst:.2e} over 100 draws", \
            {"max_abs_diff": worst}
    return _timed(5, "hellinger_quadrature", body)


# --- criterion 6 -----------------------------------------------------------

def criterion_spectral() -> CriterionResult:
    """Regularized spectrum above epsilon; mean-square gap below 1/n^2."""
    def body():
        k, n_steps = 4, 10
        eps = coupling.default_epsilon(k, n_steps)
        rng = sde._generator(_seed(6))
        q, _ = np.linalg.qr(rng.standard_normal((k, k))
                            + 1j * rng.standard_normal((k, k)))
        lam = np.array([0.5, 0.2, 0.0, 0.0])
        root = q @ np.diag(np.sqrt(lam))
        n_draws = _n(100_000)
        z = rng.standard_normal((n_draws, k, 2))
        zeta = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
        w = zeta @ root.T
        reg = coupling.spectral_regularize(w, eps, _seed(6, 1))
        cov_eigs = np.linalg.eigvalsh(reg.covariance())
        gap = float(np.mean(np.sum(np.abs(w - reg.samples) ** 2, axis=1)))
        budget = 1.0 / n_steps ** 2
        ok = bool(cov_eigs.min() >= eps - 1e-10) and gap <= budget
        detail = (f"epsilon={eps:.3e}; min regularized eigenvalue "
                  f"{cov_eigs.min():.3e}; cutoff={reg.cutoff}/{k}; "
                  f"E|dW-dZ|^2={gap:.3e} (budget {budget:.3e}); "
                  f"clipped={reg.clipped}")
        return ok, detail, {"epsilon": eps, "gap": gap,
                            "cov_eigs": list(map(float, cov_eigs)),
                            "spectrum": list(map(float, reg.eigenvalues)),
                            "cutoff": reg.cutoff}
    return _timed(6, "spectral_regularization", body)


# --- criterion 7 -----------------------------------------------------------

def _partition_weight(n_blocks: int) -> int:
    return (-1) ** (n_blocks - 1) * math.factorial(n_blocks - 1)


def _truncate(moment, items):
    total = 0
    for p in partitions.enumerate_partitions(len(items)):
        term = _partition_weight(p.n_blocks)
        for b in p.blocks:
            term *= moment(tuple(items[i] for i in b))
        total += term
    return total


def _recompose(trunc, items):
    total = 0
    for p in partitions.enumerate_partitions(len(items)):
        term = 1
        for b in p.blocks:
            term *= trunc(tuple(items[i] for i in b))
        total += term
    return total


def criterion_mobius() -> CriterionResult:
    """Moebius truncation weights invert the moment expansion exactly."""
    def body():
        rng = sde._generator(_seed(7))
        worst_exact = True
        worst_float = 0.0
        for k in range(1, 7):
            items = tuple(range(k))
            cache = {}
            for p in partitions.enumerate_partitions(k):
                for b in p.blocks:
                    key = tuple(b)
                    if key not in cache:
                        cache[key] = Fraction(int(rng.integers(1, 40)),
                                              int(rng.integers(1, 40)))
            # include all sub-tuples needed by nested truncations
            def moment(sub):
                if sub not in cache:
                    cache[sub] = Fraction(int(rng.integers(1, 40)),
                                          int(rng.integers(1, 40)))
                return cache[sub]

            trunc_cache = {}

            def trunc(sub):
                if sub not in trunc_cache:
                    trunc_cache[sub] = _truncate(moment, sub)
                return trunc_cache[sub]

            back = _recompose(trunc, items)
            worst_exact &= (back == moment(items))
            fm = {s: float(v) for s, v in cache.items()}
            ftrunc_cache = {}

            def ftrunc(sub):
                if sub not in ftrunc_cache:
                    ftrunc_cache[sub] = _truncate(lambda s: fm[s]
                                                  if s in fm else 0.0, sub)
                return ftrunc_cache[sub]

            fback = _recompose(ftrunc, items)
            worst_float = max(worst_float, abs(fback - float(moment(items))))
        counts_ok = all(
            sum(1 for _ in partitions.enumerate_partitions(k))
            == partitions.bell(k) for k in range(1, 11))
        ok = worst_exact and worst_float <= 1e-12 and counts_ok
        detail = (f"rational round-trip exact for k<=6: {worst_exact}; "
                  f"float round-trip max error {worst_float:.2e}; "
                  f"partition counts = Bell numbers for k<=10: {counts_ok}")
        return ok, detail, {"float_err": worst_float}
    return _timed(7, "mobius_roundtrip", body)


# --- criterion 8 -----------------------------------------------------------

def criterion_properties() -> CriterionResult:
    """Monotonicity, floor drops, translation KS, tails, limit regimes."""
    def body():
        checks = {}
        params2 = BetaParams(2.0)

        # (a) monotonicity in lambda post-clamp, clamp rate < 0.1%
        lam_grid = np.linspace(0.0, TWO_PI, 17)
        viol = 0
        clamp = 0.0
        n_mono = max(20, _n(200, minimum=20))
        for i in range(n_mono):
            t_end, n_steps = carousel.counting_grid(params2, TWO_PI)
            noise = sde.generate_noise(_seed(8, 1) ^ i, t_end, n_steps)
            traj = sde.integrate_family(params2, lam_grid, noise)
            viol += int(np.sum(np.diff(traj.values, axis=0) < 0))
            clamp = max(clamp, traj.clamp_fraction)
        checks["monotone"] = (viol == 0 and clamp < 1e-3,
                              f"violations={viol}, clamp_rate={clamp:.2e}")

        # (b) floor drops beyond pi/10 are rare
        drops = 0
        steps = 0
        for i in range(n_mono):
            t_end, n_steps = carousel.counting_grid(params2, TWO_PI)
            noise = sde.generate_noise(_seed(8, 2) ^ i, t_end, n_steps)
            traj = sde.integrate_family(params2, [TWO_PI], noise)
            a = traj.values[0]
            floor = np.floor(a / TWO_PI)
            bad = (np.diff(floor) < 0) & (-np.diff(a) > math.pi / 10.0)
            drops += int(np.sum(bad))
            steps += a.size - 1
        rate = drops / steps
        checks["floor"] = (rate < 1e-3, f"drop_rate={rate:.2e}")

        # (c) translation invariance of counts, two-sample KS
        n_ks = _n(10_000)
        c1, _ = carousel.count_batch(params2, np.array([TWO_PI]),
                                     seed_stream(_seed(8, 3), 0, n_ks))
        shift = 5.0
        c2, _ = carousel.count_batch(params2,
                                     np.array([shift, shift + TWO_PI]),
                                     seed_stream(_seed(8, 4), 0, n_ks))
        ks = ks_2samp(c1[:, 0], c2[:, 1] - c2[:, 0])
        checks["translation"] = (ks.pvalue > 0.01,
                                 f"KS p={ks.pvalue:.3f}")

        # (d) tail bound P(N >= a k) <= 2 (lam / 2 pi a)^k
        counts = c1[:, 0]
        tail_ok = True
        tail_parts = []
        for a in (2, 3):
            for k in (1, 2):
                phat = float(np.mean(counts >= a * k))
                se = math.sqrt(max(phat * (1 - phat), 1.0 / n_ks) / n_ks)
                bound = 2.0 * a ** (-k)
                tail_ok &= phat - 3.0 * se <= bound
                tail_parts.append(f"P(N>={a * k})={phat:.4f}<~{bound:.3f}")
        checks["tail"] = (tail_ok, ", ".join(tail_parts))

        # (e) beta -> 0: counts close to Poisson(1) in total variation
        n_poi = _n(100_000)
        cp, frz = carousel.count_batch(BetaParams(0.05), np.array([TWO_PI]),
                                       seed_stream(_seed(8, 5), 0, n_poi))
        vals = cp[:, 0]
        kmax = max(25, int(vals.max()) + 1)
        hist = np.bincount(np.clip(vals, 0, kmax), minlength=kmax + 1)
        phat = hist / n_poi
        ks_range = np.arange(kmax + 1)
        pois = np.exp(-1.0) / np.array(
            [math.factorial(int(k)) for k in ks_range], dtype=float)
        tv = 0.5 * float(np.sum(np.abs(phat - pois))) \
            + 0.5 * float(max(0.0, 1.0 - pois.sum()))
        checks["poisson_limit"] = (tv <= 0.1,
                                   f"TV={tv:.4f} (<=0.1), "
                                   f"unfrozen={1 - frz.mean():.2%}")

        # (f) beta -> inf: picket-fence rigidity, Var N([0, 4pi]) < 0.3
        n_pf = _n(20_000)
        cf, _ = carousel.count_batch(BetaParams(50.0),
                                     np.array([2.0 * TWO_PI]),
                                     seed_stream(_seed(8, 6), 0, n_pf))
        var = float(np.var(cf[:, 0], ddof=1))
        checks["picket_fence"] = (var < 0.3, f"Var={var:.4f} (<0.3)")

        ok = all(flag for flag, _ in checks.values())
        detail = "; ".join(f"{name}: {'ok' if flag else 'FAIL'} ({msg})"
                           for name, (flag, msg) in checks.items())
        return ok, detail, {name: msg for name, (_, msg) in checks.items()}
    return _timed(8, "property_suite", body)


# --- criterion 9 -----------------------------------------------------------

def criterion_coupling_decay() -> CriterionResult:
    """First-step |kappa| halves when r doubles (beta=4, r in {100, 200})."""
    def body():
        beta = 4.0
        params = BetaParams(beta)
        grid = phase_matched_grid(beta, 100.0)
        n = _n(8000)
        ests = []
        for i, r in enumerate((100.0, 200.0)):
            ests.append(coupling.increment_covariance(
                params, r, grid=grid, n_mc=n, seed0=_seed(9, i)))
        k0, k1 = abs(ests[0].kappa[0]), abs(ests[1].kappa[0])
        s0, s1 = float(ests[0].std_err[0]), float(ests[1].std_err[0])
        ratio = k0 / k1
        err = ratio * math.sqrt((s0 / k0) ** 2 + (s1 / k1) ** 2)
        ok = abs(ratio - 2.0) <= 3.0 * err
        detail = (f"|kappa(100)|={k0:.3e}+-{s0:.1e}, "
                  f"|kappa(200)|={k1:.3e}+-{s1:.1e}, "
                  f"ratio={ratio:.3f}+-{err:.3f} (target 2 +- 3 s.e.)")
        return ok, detail, {"ratio": ratio, "err": err,
                            "kappa": [k0, k1], "std_err": [s0, s1]}
    return _timed(9, "coupling_decay", body)


# --- criterion 10 ----------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def criterion_determinism() -> CriterionResult:
    """Worker count never changes a byte of the results CSV."""
    def body():
        cfgs = [
            ExperimentConfig(kind="intensity", beta=2.0, n_samples=45_000,
                             base_seed=_seed(10, 1),
                             options={"lam": TWO_PI}),
            ExperimentConfig(kind="two_point_decay", beta=2.0,
                             n_samples=2000, base_seed=_seed(10, 2),
                             options={"r_grid": [TWO_PI, 2 * TWO_PI]}),
        ]
        parts = []
        ok = True
        metrics = {}
        with tempfile.TemporaryDirectory() as tmp:
            for cfg in cfgs:
                digests = []
                for workers in (1, 3):
                    res = experiments.run(
                        cfg, Path(tmp) / f"{cfg.kind}_w{workers}",
                        n_workers=workers)
                    digests.append(_sha256(res.csv_path))
                same = digests[0] == digests[1]
                ok &= same
                parts.append(f"{cfg.kind}: workers 1 vs 3 "
                             f"{'identical' if same else 'DIFFER'}")
                metrics[cfg.kind] = {"sha256": digests[0], "identical": same}
        return ok, "; ".join(parts), metrics
    return _timed(10, "determinism", body)


CRITERIA = (
    criterion_intensity,
    criterion_beta2_oracle,
    criterion_beta2_decay,
    criterion_euler_order,
    criterion_hellinger,
    criterion_spectral,
    criterion_mobius,
    criterion_properties,
    criterion_coupling_decay,
    criterion_determinism,
)


def run_all(only=None) -> list[CriterionResult]:
    """Run the acceptance criteria (all, or a subset of 1-based indices)."""
    wanted = set(only) if only else None
    out = []
    for i, fn in enumerate(CRITERIA, start=1):
        if wanted is None or i in wanted:
            out.append(fn())
    return out


def format_report(results) -> str:
    lines = []
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        lines.append(f"criterion {res.index:02d} {res.name:<24} {status} "
                     f"[{res.wall_time_s:7.1f}s]  {res.detail}")
    n_fail = sum(1 for r in results if not r.passed)
    lines.append(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return "\n".join(lines)
