"""Reproducible experiment runner.

An ExperimentConfig fully determines every number in the output files:
replicate i always draws from stream base_seed XOR i, work is split into
fixed chunks that do not depend on the worker count, and chunk results
are merged in chunk order.  Each run writes a results CSV, a manifest
JSON recording the config, library versions and seed plan, and a summary
JSON with the headline numbers.
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import carousel, correlations, coupling, oracles, sde
from ._version import __version__
from .correlations import (CarouselCountSampler, IntervalCluster,
                           MomentAccumulator, fit_decay_exponent,
                           partially_truncated, fully_truncated, seed_stream)
from .sde import BetaParams

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "run",
           "phase_matched_grid", "KINDS", "CHUNK_SIZE"]

KINDS = ("intensity", "two_point_decay", "k_point", "overcrowding",
         "oscillation_trace", "euler_convergence", "coupling_tv")

#: Replicates per work chunk for chunked kinds; fixed so that results do
#: not depend on the worker count.
CHUNK_SIZE = 20_000

_SCHEMA_VERSION = 1

_COLUMNS = {
    "intensity": ("beta", "lam", "chunk", "n_samples", "mean", "m2"),
    "two_point_decay": ("beta", "r", "k", "k0", "estimator_tag", "value",
                        "std_err", "n_samples"),
    "k_point": ("beta", "r", "k", "k0", "estimator_tag", "value",
                "std_err", "n_samples"),
    "overcrowding": ("beta", "lam", "chunk", "n_samples", "ge3", "ge4",
                     "ge5"),
    "oscillation_trace": ("beta", "r", "path", "t", "alpha", "cos_alpha"),
    "euler_convergence": ("beta", "lam", "delta", "rms", "l2_bound",
                          "n_seeds"),
    "coupling_tv": ("beta", "r", "step", "t_left", "t_right", "kappa_re",
                    "kappa_im", "kappa_abs", "std_err", "n_samples"),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _f17(x: float) -> str:
    return format(float(x), ".17g")


def phase_matched_grid(beta: float, r_base: float,
                       turns: float = 1.0 / 3.0) -> np.ndarray:
    """One-step grid [0, Delta] with r_base * F(Delta) = 2 pi * turns.

    Doubling r then doubles the accumulated phase, so the leading
    oscillatory factor |2 sin(r F / 2)| is identical at r_base and
    2 r_base whenever turns and 2 turns have equal |sin(pi turns)|,
    e.g. turns = 1/3.  This pins the cross-covariance ratio test to a
    grid where the 1/r scaling is not masked by phase cancellation.
    """
    target = 2.0 * math.pi * turns / r_base
    if target >= 1.0:
        raise ConfigError("r_base too small for a phase-matched step")
    delta = -4.0 / beta * math.log1p(-target)
    return np.array([0.0, delta])


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run."""

    kind: str
    beta: float
    n_samples: int
    base_seed: int
    options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if not (isinstance(self.beta, (int, float)) and self.beta > 0):
            raise ConfigError("beta must be positive")
        if not (isinstance(self.n_samples, int) and self.n_samples >= 1):
            raise ConfigError("n_samples must be a positive integer")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            raise ConfigError("base_seed must be a non-negative integer")
        opt = dict(self.options or {})
        known = {
            "intensity": {"lam"},
            "two_point_decay": {"r_grid", "antithetic"},
            "k_point": {"intervals", "antithetic"},
            "overcrowding": {"lam"},
            "oscillation_trace": {"r", "t_end", "n_steps", "thin"},
            "euler_convergence": {"lam", "n_base", "n_levels"},
            "coupling_tv": {"r_values", "turns"},
        }[self.kind]
        extra = set(opt) - known
        if extra:
            raise ConfigError(f"unknown options for {self.kind}: {sorted(extra)}")
        object.__setattr__(self, "options", opt)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta": self.beta,
                "n_samples": self.n_samples, "base_seed": self.base_seed,
                "options": dict(self.options)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(kind=d["kind"], beta=float(d["beta"]),
                       n_samples=int(d["n_samples"]),
                       base_seed=int(d.get("base_seed", 0)),
                       options=dict(d.get("options", {})))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)


def _n_chunks(cfg: ExperimentConfig) -> int:
    if cfg.kind in ("intensity", "overcrowding"):
        return max(1, math.ceil(cfg.n_samples / CHUNK_SIZE))
    if cfg.kind == "two_point_decay":
        return len(cfg.options.get("r_grid") or correlations.default_r_grid())
    if cfg.kind == "oscillation_trace":
        return cfg.n_samples
    if cfg.kind == "coupling_tv":
        return len(cfg.options.get("r_values", (100.0, 200.0)))
    return 1


def _chunk_bounds(cfg: ExperimentConfig, idx: int) -> tuple[int, int]:
    lo = idx * CHUNK_SIZE
    return lo, min(cfg.n_samples, lo + CHUNK_SIZE)


def _chunk_intensity(cfg: ExperimentConfig, idx: int):
    lam = float(cfg.options.get("lam", 2.0 * math.pi))
    lo, hi = _chunk_bounds(cfg, idx)
    seeds = seed_stream(cfg.base_seed, lo, hi - lo)
    counts, _ = carousel.count_batch(BetaParams(cfg.beta), np.array([lam]),
                                     seeds)
    acc = MomentAccumulator.from_values(counts[:, 0] / (lam / (2.0 * math.pi)))
    row = (cfg.beta, lam, idx, acc.n, acc.mean, acc.m2)
    return [row], {"acc": (acc.n, acc.mean, acc.m2)}


def _chunk_overcrowding(cfg: ExperimentConfig, idx: int):
    lam = float(cfg.options.get("lam", 1.0))
    lo, hi = _chunk_bounds(cfg, idx)
    seeds = seed_stream(cfg.base_seed, lo, hi - lo)
    counts, _ = carousel.count_batch(BetaParams(cfg.beta), np.array([lam]),
                                     seeds)
    n = counts[:, 0]
    ge = [int(np.sum(n >= lvl)) for lvl in (3, 4, 5)]
    row = (cfg.beta, lam, idx, n.size, *ge)
    return [row], {"tail": (n.size, *ge)}


def _chunk_two_point(cfg: ExperimentConfig, idx: int):
    r_grid = [float(r) for r in
              cfg.options.get("r_grid") or correlations.default_r_grid()]
    r = r_grid[idx]
    left, right = correlations.unit_cluster_pair()
    # Disjoint seed universes per separation: fold r's index into the seed.
    est = partially_truncated(
        BetaParams(cfg.beta), left, right, r, cfg.n_samples,
        cfg.base_seed ^ ((idx + 1) << 48),
        antithetic=bool(cfg.options.get("antithetic", True)))
    row = (cfg.beta, r, 2, 1, est.estimator_tag, est.value, est.std_err,
           est.n_samples)
    return [row], {"estimate": {"r": r, "value": est.value,
                                "std_err": est.std_err,
                                "n_samples": est.n_samples,
                                "quality_warning": est.quality_warning}}


def _chunk_k_point(cfg: ExperimentConfig, idx: int):
    intervals = cfg.options.get("intervals")
    if not intervals:
        raise ConfigError("k_point requires options.intervals")
    spans = [(float(a), float(a) + float(l)) for a, l in intervals]
    est = fully_truncated(BetaParams(cfg.beta), spans, cfg.n_samples,
                          cfg.base_seed,
                          antithetic=bool(cfg.options.get("antithetic", True)))
    row = (cfg.beta, 0.0, len(spans), 0, est.estimator_tag, est.value,
           est.std_err, est.n_samples)
    return [row], {"estimate": {"value": est.value, "std_err": est.std_err,
                                "n_samples": est.n_samples,
                                "quality_warning": est.quality_warning}}


def _chunk_oscillation(cfg: ExperimentConfig, idx: int):
    r = float(cfg.options.get("r", 100.0))
    params = BetaParams(cfg.beta)
    t_end = float(cfg.options.get("t_end",
                                  carousel.freeze_horizon(params, r)))
    n_steps = int(cfg.options.get("n_steps",
                                  round(t_end / sde.default_step(r))))
    thin = int(cfg.options.get("thin", max(1, n_steps // 2000)))
    noise = sde.generate_noise(cfg.base_seed ^ idx, t_end, n_steps)
    traj = sde.integrate_family(params, np.array([r]), noise)
    keep = np.arange(0, n_steps + 1, thin)
    rows = [(cfg.beta, r, idx, traj.grid[j], traj.values[0, j],
             math.cos(traj.values[0, j])) for j in keep]
    return rows, {}


def _chunk_euler(cfg: ExperimentConfig, idx: int):
    lam = float(cfg.options.get("lam", 2.0))
    n_base = int(cfg.options.get("n_base", 64))
    n_levels = int(cfg.options.get("n_levels", 6))
    params = BetaParams(cfg.beta)
    t_end = 1.0
    n_fine = n_base << (n_levels - 1)
    seeds = seed_stream(cfg.base_seed, 0, cfg.n_samples)
    x, y = sde.batch_noise(seeds, t_end, n_fine)
    lam_arr = np.array([lam])
    terminals = []
    for lvl in range(n_levels):
        factor = 1 << (n_levels - 1 - lvl)
        n = n_base << lvl
        xs = x.reshape(x.shape[0], n, factor).sum(axis=2)
        ys = y.reshape(y.shape[0], n, factor).sum(axis=2)
        grid = np.linspace(0.0, t_end, n + 1)
        term = sde.batch_terminal(params, lam_arr, xs, ys, grid)
        terminals.append(term[:, 0])
    rows = []
    f_sup = lam * cfg.beta / 4.0
    for lvl in range(n_levels - 1):
        delta = t_end / (n_base << lvl)
        rms = float(np.sqrt(np.mean((terminals[lvl] - terminals[lvl + 1]) ** 2)))
        bound = sde.euler_l2_error_bound(1.0, 2.0, f_sup, t_end, delta)
        rows.append((cfg.beta, lam, delta, rms, bound, cfg.n_samples))
    deltas = np.array([row[2] for row in rows])
    rmss = np.array([row[3] for row in rows])
    slope = float(np.polyfit(np.log(deltas), np.log(rmss), 1)[0])
    return rows, {"slope": slope,
                  "below_bound": bool(np.all(rmss ** 2 <= np.array(
                      [row[4] for row in rows])))}


def _chunk_coupling(cfg: ExperimentConfig, idx: int):
    r_values = [float(r) for r in cfg.options.get("r_values", (100.0, 200.0))]
    r = r_values[idx]
    grid = phase_matched_grid(cfg.beta, min(r_values),
                              float(cfg.options.get("turns", 1.0 / 3.0)))
    est = coupling.increment_covariance(
        BetaParams(cfg.beta), r, grid=grid, n_mc=cfg.n_samples,
        seed0=cfg.base_seed ^ ((idx + 1) << 48))
    rows = []
    for j, kap in enumerate(est.kappa):
        rows.append((cfg.beta, r, j, est.grid[j], est.grid[j + 1],
                     kap.real, kap.imag, abs(kap), est.std_err[j],
                     est.n_samples))
    return rows, {"kappa_abs": [abs(k) for k in est.kappa],
                  "std_err": list(est.std_err), "r": r}


_CHUNK_FN = {
    "intensity": _chunk_intensity,
    "two_point_decay": _chunk_two_point,
    "k_point": _chunk_k_point,
    "overcrowding": _chunk_overcrowding,
    "oscillation_trace": _chunk_oscillation,
    "euler_convergence": _chunk_euler,
    "coupling_tv": _chunk_coupling,
}


def _worker(payload):
    cfg_dict, idx = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return idx, _CHUNK_FN[cfg.kind](cfg, idx)


def _summarize(cfg: ExperimentConfig, partials: list[dict]) -> dict:
    out: dict = {"kind": cfg.kind, "beta": cfg.beta}
    if cfg.kind == "intensity":
        acc = MomentAccumulator(0, 0.0, 0.0)
        for p in partials:
            acc = acc.merge(MomentAccumulator(*p["acc"]))
        out.update(normalized_mean=acc.mean, std_err=acc.std_err(),
                   n_samples=acc.n,
                   z_score=(acc.mean - 1.0) / acc.std_err()
                   if acc.std_err() > 0 else float("nan"))
    elif cfg.kind == "overcrowding":
        lam = float(cfg.options.get("lam", 1.0))
        tot = np.zeros(4, dtype=np.int64)
        for p in partials:
            tot += np.array(p["tail"], dtype=np.int64)
        n = int(tot[0])
        levels = {}
        for i, lvl in enumerate((3, 4, 5)):
            phat = tot[i + 1] / n
            bound = oracles.overcrowding_bound(cfg.beta, lam, lvl)
            levels[str(lvl)] = {
                "empirical": phat,
                "std_err": math.sqrt(max(phat * (1 - phat), 1.0 / n) / n),
                "bound": bound.value, "applicable": bound.applicable}
        out.update(lam=lam, n_samples=n, levels=levels)
    elif cfg.kind == "two_point_decay":
        ests = [p["estimate"] for p in partials]
        out["estimates"] = ests
        try:
            fake = [(e["r"], correlations.CorrelationEstimate(
                value=e["value"], std_err=e["std_err"],
                n_samples=e["n_samples"], estimator_tag="partially_truncated"))
                for e in ests]
            fit = fit_decay_exponent(fake)
            out["fit"] = {"slope": fit.slope, "slope_err": fit.slope_err,
                          "oscillation": fit.oscillation}
        except ValueError as exc:
            out["fit_error"] = str(exc)
    elif cfg.kind == "k_point":
        out["estimate"] = partials[0]["estimate"]
    elif cfg.kind == "euler_convergence":
        out.update(partials[0])
    elif cfg.kind == "coupling_tv":
        out["per_r"] = partials
        if len(partials) >= 2:
            k0 = partials[0]["kappa_abs"][0]
            k1 = partials[1]["kappa_abs"][0]
            s0 = partials[0]["std_err"][0]
            s1 = partials[1]["std_err"][0]
            ratio = k0 / k1
            out["first_step_ratio"] = ratio
            out["first_step_ratio_err"] = ratio * math.sqrt(
                (s0 / k0) ** 2 + (s1 / k1) ** 2)
    return out


@dataclass(frozen=True)
class RunResult:
    """Paths and headline numbers of one completed run."""

    csv_path: Path
    manifest_path: Path
    summary_path: Path
    summary: dict
    complete: bool


def run(config: ExperimentConfig, out_dir, n_workers: int = 1) -> RunResult:
    """Execute an experiment and write results, manifest and summary.

    The chunk decomposition and every numeric value are independent of
    n_workers; only wall time changes.  Rows are flushed to the CSV as
    chunks complete (in chunk order) and the manifest carries a
    ``complete`` flag, so an interrupted run leaves usable partial data.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}")
    csv_path = out / "results.csv"
    manifest_path = out / "manifest.json"
    summary_path = out / "summary.json"
    n_chunks = _n_chunks(config)
    columns = _COLUMNS[config.kind]
    started = time.monotonic()

    manifest = {
        "schema_version": _SCHEMA_VERSION,
        "config": config.to_dict(),
        "columns": list(columns),
        "seed_plan": "replicate i uses stream base_seed XOR i; "
                     "two_point_decay and coupling_tv fold the chunk index "
                     "into the high seed bits",
        "n_chunks": n_chunks,
        "versions": {"sinebeta": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "complete": False,
        "chunks_done": 0,
    }

    def flush_manifest() -> None:
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    partials: list[dict] = []
    flush_manifest()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        try:
            payloads = [(config.to_dict(), i) for i in range(n_chunks)]
            if n_workers > 1 and n_chunks > 1:
                with multiprocessing.Pool(min(n_workers, n_chunks)) as pool:
                    results = pool.imap(_worker, payloads)
                    for idx, (rows, partial) in results:
                        _write_rows(writer, rows)
                        fh.flush()
                        partials.append(partial)
                        manifest["chunks_done"] = idx + 1
                        flush_manifest()
            else:
                for payload in payloads:
                    idx, (rows, partial) = _worker(payload)
                    _write_rows(writer, rows)
                    fh.flush()
                    partials.append(partial)
                    manifest["chunks_done"] = idx + 1
                    flush_manifest()
        except BaseException:
            manifest["complete"] = False
            manifest["wall_time_s"] = time.monotonic() - started
            flush_manifest()
            raise
    summary = _summarize(config, partials)
    summary_path.write_text(json.dumps(summary, indent=2, default=float)
                            + "\n")
    manifest["complete"] = True
    manifest["wall_time_s"] = time.monotonic() - started
    flush_manifest()
    return RunResult(csv_path=csv_path, manifest_path=manifest_path,
                     summary_path=summary_path, summary=summary,
                     complete=True)


def _write_rows(writer, rows) -> None:
    for row in rows:
        writer.writerow([_f17(v) if isinstance(v, float) else v
                         for v in row])
