"""Spectrum shrinkage via the global analytic EVB matrix-factorization solution.

Noise variance, truncation threshold and shrinkage follow the closed-form
estimator of Nakajima et al., "Global analytic solution of fully-observed
variational Bayesian matrix factorization" (JMLR 2013); the constant 2.5129
is their universal threshold coefficient. Used as optional preprocessing
that strips initialization noise from weight spectra before metric
computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectra import DegenerateSpectrum, SingularSpectrum

TAU_BAR_COEFF = 2.5129

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MAX_SEARCH_ITERS = 100
SEARCH_REL_TOL = 1e-8


class OptimizationFailure(RuntimeError):
    """Noise-variance search did not converge within the iteration budget."""


class EmptyResult(ValueError):
    """Shrinkage removed every component."""


@dataclass(frozen=True)
class EvbmfResult:
    rank: int
    shrunk_values: np.ndarray
    sigma2: float
    threshold: float


def _tau(x: np.ndarray, alpha: float) -> np.ndarray:
    # positive root of tau^2 - (x - 1 - alpha) tau + alpha = 0
    return 0.5 * (x - (1.0 + alpha) + np.sqrt((x - (1.0 + alpha)) ** 2 - 4.0 * alpha))


def _free_energy(sigma2: float, gammas: np.ndarray, rows: int, cols: int, n_terms: int) -> float:
    """EVB free energy as a function of the noise variance.

    ``gammas`` are the singular values entering the sum; ``n_terms`` is the
    number of spectrum components those sums represent, so the trailing
    ``(rows - n_terms) * log(sigma2)`` correction vanishes when the full
    spectrum is supplied.
    """
    alpha = rows / cols
    x = gammas**2 / (cols * sigma2)
    x_bar = (1.0 + TAU_BAR_COEFF * math.sqrt(alpha)) * (1.0 + alpha / (TAU_BAR_COEFF * math.sqrt(alpha)))
    # exact-zero components (rank-deficient input) would contribute -log(0);
    # clamp so the energy stays finite-armed for the comparison-based search
    below = np.maximum(x[x <= x_bar], 1e-290)
    above = x[x > x_bar]
    total = float(np.sum(below - np.log(below)))
    if above.size:
        tau = _tau(above, alpha)
        total += float(np.sum(above - tau))
        total += float(np.sum(np.log((tau + 1.0) / above)))
        total += alpha * float(np.sum(np.log(tau / alpha + 1.0)))
    total += (rows - n_terms) * math.log(sigma2)
    return total


def _golden_section(f, lo: float, hi: float) -> float:
    """Minimize a unimodal scalar function on [lo, hi] by golden-section search."""
    if hi <= lo:
        return lo
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(MAX_SEARCH_ITERS):
        if b - a <= SEARCH_REL_TOL * (abs(a) + abs(b)) / 2.0:
            return 0.5 * (a + b)
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    if b - a > SEARCH_REL_TOL * max(1.0, (abs(a) + abs(b)) / 2.0):
        raise OptimizationFailure("noise-variance search exhausted its iteration budget")
    return 0.5 * (a + b)


def evbmf(s: SingularSpectrum) -> EvbmfResult:
    """Estimate noise variance, threshold and shrink a singular spectrum.

    The spectrum must come from a matrix oriented rows <= cols
    (``shrink_spectrum`` handles the orientation). Components whose
    singular value exceeds the analytic threshold are kept and shrunk;
    the rest are treated as noise.
    """
    rows, cols = (s.m, s.n) if s.m <= s.n else (s.n, s.m)
    gammas = np.asarray(s.values, dtype=np.float64)
    if gammas.size == 0 or float(gammas[0]) <= s.zero_tol:
        raise DegenerateSpectrum("all singular values are at or below the zero tolerance")

    alpha = rows / cols
    tau_bar = TAU_BAR_COEFF * math.sqrt(alpha)
    x_bar = (1.0 + tau_bar) * (1.0 + alpha / tau_bar)

    # analytic solvability bound on the number of recoverable components
    n_candidates = min(int(math.ceil(rows / (1.0 + alpha))) - 1, rows)
    n_candidates = max(n_candidates, 0)

    trailing = gammas[n_candidates:]
    lower = max(
        float(gammas[min(n_candidates, gammas.size - 1)]) ** 2 / (cols * x_bar),
        float(np.mean(trailing**2)) / cols if trailing.size else 0.0,
    )
    upper = float(np.sum(gammas**2)) / (rows * cols)

    # rescale by the lower bound so the search runs near unit magnitude
    scale = lower if lower > 0 else upper
    if scale <= 0:
        raise DegenerateSpectrum("spectrum carries no energy")
    g = gammas / math.sqrt(scale)
    sigma2 = scale * _golden_section(
        lambda v: _free_energy(v, g, rows, cols, n_terms=g.size),
        lower / scale,
        upper / scale,
    )

    threshold = math.sqrt(cols * sigma2 * (1.0 + tau_bar) * (1.0 + alpha / tau_bar))
    kept = gammas[gammas > threshold]
    if kept.size:
        ratio = (rows + cols) * sigma2 / kept**2
        shrunk = 0.5 * kept * (1.0 - ratio + np.sqrt((1.0 - ratio) ** 2 - 4.0 * rows * cols * sigma2**2 / kept**4))
    else:
        shrunk = np.empty(0, dtype=np.float64)
    return EvbmfResult(rank=int(kept.size), shrunk_values=shrunk, sigma2=float(sigma2), threshold=float(threshold))


def shrink_spectrum(s: SingularSpectrum) -> SingularSpectrum:
    """Replace a spectrum by its EVB-shrunk components.

    Raises ``EmptyResult`` when nothing survives the threshold, so callers
    can mark the layer degenerate instead of propagating an empty spectrum.
    """
    result = evbmf(s)
    if result.rank == 0:
        raise EmptyResult("no component exceeds the EVB threshold")
    return SingularSpectrum(
        values=result.shrunk_values,
        m=result.rank,
        n=result.rank,
        storage_eps=s.storage_eps,
    )
