"""Modified Bessel functions in log scale and the samplers built on them.

Everything downstream (jump rates, percolation probabilities, crossing-count
distributions) funnels through this module, so the evaluation strategy is
fixed here once: power series for small argument, standard asymptotic
expansion (resp. scaled continuation) for large argument, and all rate
arithmetic done on logarithms so that ratios never overflow.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.special

from .errors import DomainError

# Both I branches agree to ~1e-12 inside the overlap window [25, 35];
# verified explicitly by the test suite.
SERIES_SWITCH = 30.0
# Below this the K difference identity is cancellation-safe.
K_IDENTITY_SWITCH = 2.0

_MAX_SERIES_TERMS = 600
_MAX_ASYMPTOTIC_TERMS = 60


def _check_order(nu: float) -> float:
    if nu < -1.0:
        raise DomainError(f"Bessel order {nu} below -1")
    # I_{-1} = I_1: aliasing keeps the series recurrence away from 1/Gamma(0).
    return 1.0 if nu == -1.0 else nu


def _series_log_sum(nu: float, q: float) -> float:
    """log of S = sum_n q^n / (n! Gamma(n+nu+1)) for q = (z/2)^2, nu > -1."""
    term = 1.0
    total = 1.0
    for n in range(_MAX_SERIES_TERMS):
        term *= q / ((n + 1.0) * (n + nu + 1.0))
        total += term
        if term < 1e-18 * total:
            break
    return math.log(total) - math.lgamma(nu + 1.0)


def _asymptotic_log_i(nu: float, z: float) -> float:
    """log I_nu(z) by the large-argument expansion, adequate for z >= ~25."""
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = math.inf
    for k in range(1, _MAX_ASYMPTOTIC_TERMS):
        term *= -(mu - (2.0 * k - 1.0) ** 2) / (8.0 * k * z)
        if abs(term) >= prev:
            break
        total += term
        prev = abs(term)
        if abs(term) < 1e-18 * abs(total):
            break
    return z - 0.5 * math.log(2.0 * math.pi * z) + math.log(total)


def log_bessel_i(nu: float, z: float) -> float:
    """log I_nu(z) for nu >= -1, z > 0 (z = 0 only with nu = 0)."""
    nu = _check_order(nu)
    if z < 0.0:
        raise DomainError(f"negative Bessel argument {z}")
    if z == 0.0:
        if nu == 0.0:
            return 0.0
        raise DomainError("z = 0 is only defined at order 0")
    if z <= SERIES_SWITCH:
        return nu * math.log(0.5 * z) + _series_log_sum(nu, 0.25 * z * z)
    return _asymptotic_log_i(nu, z)


def bessel_i_ratio(nu_num: float, nu_den: float, z: float) -> float:
    """I_{nu_num}(z) / I_{nu_den}(z), stable up to z ~ 700 and as z -> 0.

    Small arguments are exact in log scale (no cancellation); at z = 0 the
    series limit Gamma(nu_den+1)/Gamma(nu_num+1) * (z/2)^(nu_num-nu_den)
    applies, which is 0, 1 or +inf depending on the order gap.
    """
    a = _check_order(nu_num)
    b = _check_order(nu_den)
    if abs(nu_num - nu_den) > 2.0 + 1e-12:
        raise DomainError("ratio orders more than 2 apart")
    if z < 0.0:
        raise DomainError(f"negative Bessel argument {z}")
    if z == 0.0:
        if a > b:
            return 0.0
        if a == b:
            return 1.0
        return math.inf
    return math.exp(log_bessel_i(a, z) - log_bessel_i(b, z))


def _k_small_pieces(nu: float, z: float) -> tuple[float, float]:
    """(S_minus, S_plus) with I_{+-nu}(z) = (z/2)^{-+nu} * S."""
    q = 0.25 * z * z
    s_minus = math.exp(_series_log_sum(-nu, q))
    s_plus = math.exp(_series_log_sum(nu, q))
    return s_minus, s_plus


def log_bessel_k(nu: float, z: float) -> float:
    """log K_nu(z) for 0 < nu < 1, z > 0 (the only regime the rates need).

    Uses K_nu = Gamma(nu) Gamma(1-nu) (I_{-nu} - I_nu) / 2 while the
    difference is cancellation-safe, and the exponentially scaled routine
    beyond that.  K is even in its order, so call sites may fold nu -> |nu|.
    """
    if not 0.0 < nu < 1.0:
        raise DomainError(f"K order {nu} outside (0, 1)")
    if z <= 0.0:
        raise DomainError(f"K argument {z} must be positive")
    if z <= K_IDENTITY_SWITCH:
        s_minus, s_plus = _k_small_pieces(nu, z)
        half = 0.5 * z
        diff = half ** (-nu) * s_minus - half ** nu * s_plus
        return (
            math.log(0.5)
            + math.lgamma(nu)
            + math.lgamma(1.0 - nu)
            + math.log(diff)
        )
    return math.log(scipy.special.kve(nu, z)) - z


def log_bessel_k_normalized(nu: float, z: float) -> float:
    """log of 2 (z/2)^nu K_nu(z) / Gamma(nu), which tends to 1 as z -> 0."""
    if not 0.0 < nu < 1.0:
        raise DomainError(f"K order {nu} outside (0, 1)")
    if z <= 0.0:
        raise DomainError(f"K argument {z} must be positive")
    if z <= K_IDENTITY_SWITCH:
        # 2 (z/2)^nu K_nu / Gamma(nu) = Gamma(1-nu) (S_minus - (z/2)^{2 nu} S_plus):
        # cancellation-free route to the z -> 0 limit 1.
        s_minus, s_plus = _k_small_pieces(nu, z)
        val = s_minus - (0.5 * z) ** (2.0 * nu) * s_plus
        return math.lgamma(1.0 - nu) + math.log(val)
    return (
        math.log(2.0)
        + nu * math.log(0.5 * z)
        - math.lgamma(nu)
        + log_bessel_k(nu, z)
    )


# ---------------------------------------------------------------------------
# Discrete Bessel distribution


def bessel_log_pmf(nu: float, z: float, n: int) -> float:
    """log pmf of the discrete Bessel(nu, z) law at n (``-inf`` for mass 0)."""
    nu = _check_order_keep_minus_one(nu)
    if z < 0.0:
        raise DomainError(f"negative Bessel argument {z}")
    if n < 0:
        return -math.inf
    if z == 0.0:
        return 0.0 if n == 0 else -math.inf
    if n + nu + 1.0 <= 0.0:
        # order -1 at n = 0: the 1/Gamma(0) factor kills the atom
        return -math.inf
    return (
        (2.0 * n + nu) * math.log(0.5 * z)
        - math.lgamma(n + 1.0)
        - math.lgamma(n + nu + 1.0)
        - log_bessel_i(nu, z)
    )


def _check_order_keep_minus_one(nu: float) -> float:
    if nu < -1.0:
        raise DomainError(f"Bessel order {nu} below -1")
    return nu


def bessel_pmf(nu: float, z: float, n: int) -> float:
    """pmf of the discrete Bessel(nu, z) law; Bessel(nu, 0) is a Dirac at 0."""
    return math.exp(bessel_log_pmf(nu, z, n))


def bessel_pmf_table(nu: float, z: float, tail: float = 1e-14) -> np.ndarray:
    """pmf values 0..N with N chosen so the dropped tail is below ``tail``."""
    nu = _check_order_keep_minus_one(nu)
    if z < 0.0:
        raise DomainError(f"negative Bessel argument {z}")
    if z == 0.0:
        return np.array([1.0])
    q = 0.25 * z * z
    values = []
    if nu == -1.0:
        values.append(0.0)
        term = math.exp(math.log(0.5 * z) - log_bessel_i(nu, z))
        n = 1
    else:
        term = math.exp(nu * math.log(0.5 * z) - math.lgamma(nu + 1.0) - log_bessel_i(nu, z))
        n = 0
    cum = 0.0
    past_peak_n = 0.5 * z + 2.0
    while cum < 1.0 - tail:
        values.append(term)
        cum += term
        term *= q / ((n + 1.0) * (n + nu + 1.0))
        n += 1
        if n > past_peak_n and term < 1e-17 * max(cum, 1e-300):
            break  # accumulation roundoff already dominates the dropped tail
        if n > 1_000_000:
            raise DomainError("Bessel pmf table failed to accumulate mass")
    return np.asarray(values)


def sample_bessel(nu: float, z: float, rng: np.random.Generator, size=None):
    """Exact Bessel(nu, z) sample(s) by inverse CDF over the pmf."""
    table = bessel_pmf_table(nu, z)
    cdf = np.cumsum(table)
    if size is None:
        return int(np.searchsorted(cdf, rng.random(), side="right").clip(0, len(cdf) - 1))
    draws = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(draws, len(cdf) - 1)


# ---------------------------------------------------------------------------
# Poisson-Dirichlet stick pattern


def sample_pd_sticks(
    alpha: float,
    mass: float,
    epsilon: float,
    rng: np.random.Generator,
) -> list[float]:
    """Stick lengths of a size-biased Poisson-Dirichlet(alpha) split of ``mass``.

    Beta(1, alpha) residual fractions; the recursion stops once the remaining
    mass drops below ``epsilon * mass`` and the leftover is appended as one
    final stick so the sticks add up to ``mass`` exactly.  alpha = 0 yields
    the trivial single-stick pattern.
    """
    if alpha < 0.0:
        raise DomainError(f"negative stick parameter {alpha}")
    if mass <= 0.0:
        raise DomainError(f"stick mass {mass} must be positive")
    if epsilon <= 0.0:
        raise DomainError(f"truncation threshold {epsilon} must be positive")
    if alpha == 0.0:
        return [mass]
    sticks = []
    remaining = mass
    floor = epsilon * mass
    while remaining >= floor:
        frac = rng.beta(1.0, alpha)
        sticks.append(frac * remaining)
        remaining *= 1.0 - frac
    sticks.append(remaining)
    return sticks


# ---------------------------------------------------------------------------
# Fused evaluations used by the clock-inversion hot loops


def log_i_pair(nu: float, z: float) -> tuple[float, float]:
    """(log I_nu(z), log I_{nu-1}(z)) sharing one series pass, nu >= 0, z > 0.

    The two orders differ by the factor (n + nu) per term, so both sums come
    out of a single loop; above the series switch the asymptotic branch is
    evaluated twice (it is cheap).
    """
    if z <= 0.0:
        raise DomainError(f"argument {z} must be positive")
    if z > SERIES_SWITCH:
        return _asymptotic_log_i(nu, z), _asymptotic_log_i(nu - 1.0, z)
    q = 0.25 * z * z
    term = 1.0
    s_hi = 1.0
    s_lo = nu
    for n in range(_MAX_SERIES_TERMS):
        term *= q / ((n + 1.0) * (n + nu + 1.0))
        s_hi += term
        s_lo += term * (n + 1.0 + nu)
        if term < 1e-18 * s_hi:
            break
    lg = math.lgamma(nu + 1.0)
    log_half_z = math.log(0.5 * z)
    return (
        nu * log_half_z + math.log(s_hi) - lg,
        (nu - 1.0) * log_half_z + math.log(s_lo) - lg,
    )
