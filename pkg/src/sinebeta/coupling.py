"""Complex-Gaussian calculus for coupled noise increments.

The rotated driving noises of two distant phase families are jointly
Gaussian with a small cross-covariance kappa.  This module estimates
kappa by Monte Carlo, computes Hellinger and total-variation bounds
between block-Gaussian laws, regularizes near-singular increment
covariances by spectral cutoff, and evaluates the Schur-complement
determinant bounds used to control the coupling.

Conventions: a circular complex Gaussian vector z has density
exp(-z^H Sigma^{-1} z) / (pi^m det Sigma) with Sigma = E[z z^H]; a
scalar standard increment over time delta has Sigma = 2 delta (two real
components of variance delta).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .sde import BetaParams, _generator, default_step

__all__ = [
    "DegenerateCovariance",
    "HermitianBlockCov",
    "IncrementCovariance",
    "RegularizedIncrements",
    "DetRatioBounds",
    "increment_covariance",
    "hellinger_complex_gaussian",
    "hellinger_quadrature",
    "tv_upper_bound",
    "tv_scaling_bound",
    "spectral_regularize",
    "regularized_cross_covariance",
    "determinant_ratio_bounds",
    "sample_circular_gaussian",
    "default_epsilon",
]

_MAGIC = b"HBC1"


class DegenerateCovariance(ValueError):
    """A covariance block is singular where strict positivity is required."""


@dataclass(frozen=True)
class HermitianBlockCov:
    """Block-diagonal Hermitian PSD covariance of stacked complex increments.

    ``blocks`` has shape (n_blocks, m, m).  Validation enforces Hermitian
    symmetry to 1e-12 and eigenvalues >= -1e-10; construct via
    :meth:`from_blocks` to symmetrize noisy empirical input first.
    """

    blocks: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.blocks, dtype=np.complex128)
        if b.ndim == 2:
            b = b[None]
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValueError("blocks must have shape (n_blocks, m, m)")
        herm = np.max(np.abs(b - np.conj(np.transpose(b, (0, 2, 1)))))
        if herm > 1e-12:
            raise ValueError(f"blocks not Hermitian (deviation {herm:.3e})")
        eigs = np.linalg.eigvalsh(b)
        if eigs.min() < -1e-10:
            raise ValueError(f"negative eigenvalue {eigs.min():.3e}")
        object.__setattr__(self, "blocks", b)

    @classmethod
    def from_blocks(cls, blocks) -> "HermitianBlockCov":
        b = np.asarray(blocks, dtype=np.complex128)
        if b.ndim == 2:
            b = b[None]
        b = 0.5 * (b + np.conj(np.transpose(b, (0, 2, 1))))
        return cls(b)

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def m(self) -> int:
        return self.blocks.shape[1]

    def to_bytes(self) -> bytes:
        """Magic, m, n_blocks as uint32 LE, then per block column-major
        complex128 (interleaved re/im float64)."""
        head = _MAGIC + struct.pack("<II", self.m, self.n_blocks)
        body = b"".join(np.asfortranarray(blk).tobytes(order="F")
                        for blk in self.blocks)
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "HermitianBlockCov":
        if data[:4] != _MAGIC:
            raise ValueError("bad magic")
        m, nb = struct.unpack("<II", data[4:12])
        if len(data) - 12 != nb * m * m * 16:
            raise ValueError("truncated payload")
        flat = np.frombuffer(data[12:], dtype=np.complex128)
        blocks = np.stack([flat[i * m * m:(i + 1) * m * m].reshape((m, m),
                                                                   order="F")
                           for i in range(nb)])
        return cls(blocks)

    def to_json(self) -> str:
        return json.dumps({
            "m": self.m, "n_blocks": self.n_blocks,
            "blocks": [[[[z.real, z.imag] for z in row] for row in blk]
                       for blk in self.blocks]})

    @classmethod
    def from_json(cls, text: str) -> "HermitianBlockCov":
        d = json.loads(text)
        blocks = np.array([[[complex(re, im) for re, im in row]
                            for row in blk] for blk in d["blocks"]])
        return cls(blocks.reshape(d["n_blocks"], d["m"], d["m"]))


def _logdet_pd(blocks: np.ndarray, what: str) -> np.ndarray:
    sign, logdet = np.linalg.slogdet(blocks)
    if np.any(sign.real <= 0) or not np.all(np.isfinite(logdet)):
        raise DegenerateCovariance(f"{what} is not strictly positive definite")
    return logdet


def hellinger_complex_gaussian(sigma_x: HermitianBlockCov,
                               sigma_y: HermitianBlockCov) -> float:
    """Hellinger distance between centred circular complex Gaussians.

    H^2 = 1 - prod_b det(X_b)^{1/2} det(Y_b)^{1/2} / det((X_b + Y_b)/2),
    evaluated in log space across blocks.
    """
    if sigma_x.blocks.shape != sigma_y.blocks.shape:
        raise ValueError("block shapes differ")
    lx = _logdet_pd(sigma_x.blocks, "sigma_x")
    ly = _logdet_pd(sigma_y.blocks, "sigma_y")
    lm = _logdet_pd(0.5 * (sigma_x.blocks + sigma_y.blocks),
                    "(sigma_x + sigma_y)/2")
    log_bc = float(np.sum(0.5 * lx + 0.5 * ly - lm))
    return math.sqrt(max(0.0, -math.expm1(min(log_bc, 0.0))))


def hellinger_quadrature(sigma_x: HermitianBlockCov,
                         sigma_y: HermitianBlockCov) -> float:
    """Hellinger distance by direct numerical integration of the densities.

    Whitens by sigma_x and diagonalizes the whitened sigma_y, after which
    the Bhattacharyya integral factorizes into radial 1-d integrals
    int_0^inf 2 pi rho sqrt(p_1(rho) p_d(rho)) d rho per coordinate.
    Slow; reference implementation for cross-checking the closed form.
    """
    if sigma_x.blocks.shape != sigma_y.blocks.shape:
        raise ValueError("block shapes differ")
    log_bc = 0.0
    for bx, by in zip(sigma_x.blocks, sigma_y.blocks):
        wx, vx = np.linalg.eigh(bx)
        if wx.min() <= 0:
            raise DegenerateCovariance("sigma_x block not PD")
        root_inv = vx @ np.diag(wx ** -0.5) @ vx.conj().T
        d = np.linalg.eigvalsh(root_inv @ by @ root_inv.conj().T)
        if d.min() <= 0:
            raise DegenerateCovariance("sigma_y block not PD")
        for di in d:
            # BC of CN(0,1) vs CN(0,di) in one complex coordinate.
            val, _ = quad(
                lambda rho, di=di: 2.0 * math.pi * rho * math.sqrt(
                    math.exp(-rho * rho) / math.pi
                    * math.exp(-rho * rho / di) / (math.pi * di)),
                0.0, np.inf, epsabs=1e-12, epsrel=1e-12)
            log_bc += math.log(val)
    return math.sqrt(max(0.0, -math.expm1(min(log_bc, 0.0))))


def tv_upper_bound(sigma_x: HermitianBlockCov,
                   sigma_y: HermitianBlockCov) -> float:
    """Total-variation bound sqrt(2) * Hellinger."""
    return math.sqrt(2.0) * hellinger_complex_gaussian(sigma_x, sigma_y)


def tv_scaling_bound(n_steps: int, t_end: float, r: float, beta: float,
                   constant: float = 1.0) -> float:
    """Closed-form coupling bound C n^{3/2} e^{beta T / 4} / r."""
    if r <= 0:
        raise ValueError("r must be positive")
    return constant * n_steps ** 1.5 * math.exp(beta * t_end / 4.0) / r


@dataclass(frozen=True)
class IncrementCovariance:
    """Per-step cross-covariance estimates kappa_j = E[dW1 conj(dW2)]."""

    grid: np.ndarray
    kappa: np.ndarray
    std_err: np.ndarray
    n_samples: int
    separation: float

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.grid)


def increment_covariance(params: BetaParams, r: float,
                         x_shifts: tuple[float, float] = (0.0, 0.0), *,
                         grid, n_mc: int, seed0: int,
                         substep: float | None = None) -> IncrementCovariance:
    """Estimate the per-step cross-covariance of two rotated noises.

    The noises driving phase families anchored at x_shifts[0] and
    x_shifts[1] + r differ by the rotation e^{-i alpha_s} where s is the
    anchor separation, so kappa_j = 2 E[int_{t_j}^{t_{j+1}} e^{i alpha_s}].
    The time integral is evaluated per sample on a fine sub-grid
    (trapezoid in the phase factor), which averages out the fast phase
    rotation instead of sampling it; the outer expectation is plain
    Monte Carlo over seed0 XOR i.

    Separation zero is exact: kappa_j = 2 delta_j with zero error.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be increasing with at least two times")
    if grid[0] != 0.0:
        raise ValueError("grid must start at 0")
    sep = (x_shifts[1] + r) - x_shifts[0]
    deltas = np.diff(grid)
    n_out = deltas.size
    if sep == 0.0:
        return IncrementCovariance(grid=grid, kappa=2.0 * deltas + 0j,
                                   std_err=np.zeros(n_out),
                                   n_samples=n_mc, separation=0.0)
    h = substep if substep is not None else default_step(sep)
    counts = np.maximum(1, np.ceil(deltas / h).astype(int))
    fine_dt = np.concatenate([np.full(c, d / c)
                              for c, d in zip(counts, deltas)])
    owner = np.concatenate([np.full(c, j) for j, c in enumerate(counts)])
    m = fine_dt.size
    t_left = grid[0] + np.concatenate(([0.0], np.cumsum(fine_dt[:-1])))
    drift = sep * (params.drift_mass(t_left + fine_dt)
                   - params.drift_mass(t_left))
    sqrt_dt = np.sqrt(fine_dt)

    chunk = max(16, int(2.0e7 / max(m, 1)))
    acc = np.zeros((n_mc, n_out), dtype=np.complex128)
    done = 0
    while done < n_mc:
        b = min(chunk, n_mc - done)
        z = np.empty((b, m, 2))
        for i in range(b):
            z[i] = _generator(seed0 ^ (done + i)).standard_normal((m, 2))
        x = z[..., 0] * sqrt_dt
        y = z[..., 1] * sqrt_dt
        alpha = np.zeros(b)
        phase_prev = np.ones(b, dtype=np.complex128)
        block = acc[done:done + b]
        for j in range(m):
            alpha = alpha + drift[j] + (np.cos(alpha) - 1.0) * x[:, j] \
                + np.sin(alpha) * y[:, j]
            phase = np.exp(1j * alpha)
            block[:, owner[j]] += 0.5 * (phase_prev + phase) * fine_dt[j]
            phase_prev = phase
        done += b
    acc *= 2.0
    kappa = acc.mean(axis=0)
    if n_mc > 1:
        var = acc.real.var(axis=0, ddof=1) + acc.imag.var(axis=0, ddof=1)
        std_err = np.sqrt(var / n_mc)
    else:
        std_err = np.full(n_out, np.nan)
    return IncrementCovariance(grid=grid, kappa=kappa, std_err=std_err,
                               n_samples=n_mc, separation=sep)


def default_epsilon(k: int, n_steps: int) -> float:
    """Spectral cutoff 1 / (2 k n^2)."""
    return 1.0 / (2.0 * k * n_steps * n_steps)


@dataclass(frozen=True)
class RegularizedIncrements:
    """Spectrally regularized increment samples for one time step.

    Eigen-modes of the (empirical or supplied) covariance above epsilon
    are kept; the rest are replaced by fresh complex Gaussians of
    variance epsilon.  ``gap_bound`` is the guaranteed mean-square gap
    sum_{l > cutoff} (lambda_l + epsilon) <= 2 k epsilon.
    """

    epsilon: float
    eigenvalues: np.ndarray
    basis: np.ndarray
    cutoff: int
    samples: np.ndarray
    gap_bound: float
    clipped: bool

    @property
    def k(self) -> int:
        return self.basis.shape[0]

    def projection(self) -> np.ndarray:
        """The kept-mode projector P = V diag(1..1, 0..0) V^H."""
        keep = np.zeros(self.k)
        keep[:self.cutoff] = 1.0
        return (self.basis * keep) @ self.basis.conj().T

    def covariance(self) -> np.ndarray:
        lam = np.concatenate([self.eigenvalues[:self.cutoff],
                              np.full(self.k - self.cutoff, self.epsilon)])
        return (self.basis * lam) @ self.basis.conj().T


def _ordered_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigensystem, eigenvalues descending, deterministic phase.

    Each eigenvector is rotated so its first component of modulus above
    1e-12 is real positive, which pins the basis (up to degeneracies) and
    makes the cutoff index reproducible across runs.
    """
    w, v = np.linalg.eigh(m)
    order = np.argsort(w)[::-1]
    w = w[order]
    v = v[:, order]
    for col in range(v.shape[1]):
        vec = v[:, col]
        nz = np.flatnonzero(np.abs(vec) > 1e-12)
        if nz.size:
            pivot = vec[nz[0]]
            v[:, col] = vec * (np.conj(pivot) / abs(pivot))
    return w, v


def spectral_regularize(raw: np.ndarray, epsilon: float, seed: int, *,
                        covariance: np.ndarray | None = None,
                        n_steps: int | None = None) -> RegularizedIncrements:
    """Regularize complex increment samples by eigenvalue cutoff.

    ``raw`` has shape (n_samples, k).  The spatial covariance E[w w^H] is
    taken from ``covariance`` when supplied and estimated from the samples
    otherwise; negative estimated eigenvalues are clipped at zero with the
    ``clipped`` flag raised.  When every eigenvalue exceeds epsilon the
    output samples equal the input exactly.
    """
    raw = np.ascontiguousarray(raw, dtype=np.complex128)
    if raw.ndim != 2:
        raise ValueError("raw must have shape (n_samples, k)")
    n_samples, k = raw.shape
    if epsilon <= 0:
        if n_steps is None:
            raise ValueError("need epsilon > 0 or n_steps")
        epsilon = default_epsilon(k, n_steps)
    if covariance is None:
        # E[w w^H] convention: entry (a, b) is E[w_a conj(w_b)].
        cov = raw.T @ raw.conj() / n_samples
    else:
        cov = np.asarray(covariance, dtype=np.complex128)
    cov = 0.5 * (cov + cov.conj().T)
    w, v = _ordered_eigh(cov)
    clipped = bool(w[-1] < 0)
    w = np.maximum(w, 0.0)
    cutoff = int(np.sum(w > epsilon))
    coords = raw @ np.conj(v)
    if cutoff < k:
        rng = _generator(seed)
        fresh = rng.standard_normal((n_samples, k - cutoff, 2))
        fresh = (fresh[..., 0] + 1j * fresh[..., 1]) * math.sqrt(epsilon / 2.0)
        coords[:, cutoff:] = fresh
        samples = coords @ v.T
    else:
        samples = raw
    gap = float(np.sum(w[cutoff:] + epsilon))
    return RegularizedIncrements(epsilon=epsilon, eigenvalues=w, basis=v,
                                 cutoff=cutoff, samples=samples,
                                 gap_bound=gap, clipped=clipped)


def regularized_cross_covariance(reg1: RegularizedIncrements,
                                 reg2: RegularizedIncrements,
                                 cross: np.ndarray) -> np.ndarray:
    """Cross-covariance of the regularized clusters, P1 C12 P2^H."""
    return reg1.projection() @ np.asarray(cross) @ reg2.projection().conj().T


@dataclass(frozen=True)
class DetRatioBounds:
    """Schur-complement determinant ratio with its trace bound."""

    ratio: float
    trace_bound: float
    applicable: bool


def determinant_ratio_bounds(m1: np.ndarray, m2: np.ndarray,
                             kappa: np.ndarray) -> DetRatioBounds:
    """det(coupled) / det(decoupled) for a 2x2 block Hermitian matrix.

    The coupled matrix is [[m1, kappa], [kappa^H, m2]]; the ratio equals
    det(I - m2^{-1} kappa^H m1^{-1} kappa) by the Schur complement, and
    P = m2^{-1} kappa^H m1^{-1} kappa gives the bound
    1 - Tr(P) <= ratio <= 1 whenever Tr(P) < 1; for Tr(P) >= 1 the bound
    is inapplicable (the distance must then be capped trivially).
    """
    m1 = np.asarray(m1, dtype=np.complex128)
    m2 = np.asarray(m2, dtype=np.complex128)
    kappa = np.asarray(kappa, dtype=np.complex128)
    _logdet_pd(m1[None], "m1")
    _logdet_pd(m2[None], "m2")
    p = np.linalg.solve(m2, kappa.conj().T) @ np.linalg.solve(m1, kappa)
    trace = float(np.trace(p).real)
    eye = np.eye(p.shape[0])
    sign, logdet = np.linalg.slogdet(eye - p)
    ratio = float(sign.real * np.exp(logdet))
    return DetRatioBounds(ratio=ratio, trace_bound=trace,
                          applicable=trace < 1.0)


def sample_circular_gaussian(cov: np.ndarray, n_samples: int,
                             seed: int) -> np.ndarray:
    """Draw centred circular complex Gaussians with E[z z^H] = cov."""
    cov = np.asarray(cov, dtype=np.complex128)
    try:
        a = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance("covariance not PD") from exc
    z = _generator(seed).standard_normal((n_samples, cov.shape[0], 2))
    zeta = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
    return zeta @ a.T
