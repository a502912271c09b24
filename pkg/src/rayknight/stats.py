"""Statistical machinery turning distributional identities into pass/fail tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import TooFewSamples

P_THRESHOLD = 0.01
SIGMA_THRESHOLD = 3.0
MIN_SAMPLES = 100


@dataclass(frozen=True)
class TestReport:
    """One pass/fail record; every FAIL is bit-reproducible from the seed."""

    name: str
    statistic: float
    p_value: float | None
    sigma: float | None
    n: int
    verdict: str
    seed: int | None = None

    def __str__(self):
        detail = []
        if self.p_value is not None:
            detail.append(f"p={self.p_value:.4g}")
        if self.sigma is not None:
            detail.append(f"dev={self.sigma:.2f}sigma")
        detail.append(f"n={self.n}")
        if self.seed is not None:
            detail.append(f"seed={self.seed}")
        return f"{self.verdict:4s} {self.name} ({', '.join(detail)})"

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def _verdict_from_p(p: float) -> str:
    return "PASS" if p > P_THRESHOLD else "FAIL"


def ks_two_sample(a, b, name: str = "ks", seed=None) -> TestReport:
    """Two-sample Kolmogorov-Smirnov with the asymptotic p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < MIN_SAMPLES or len(b) < MIN_SAMPLES:
        raise TooFewSamples(f"{name}: need >= {MIN_SAMPLES} samples per side")
    stat, p = scipy.stats.ks_2samp(a, b, method="asymp")
    return TestReport(name, float(stat), float(p), None, len(a) + len(b), _verdict_from_p(p), seed)


def ks_one_sample(a, cdf, name: str = "ks1", seed=None) -> TestReport:
    """One-sample KS against a callable CDF."""
    a = np.asarray(a, dtype=float)
    if len(a) < MIN_SAMPLES:
        raise TooFewSamples(f"{name}: need >= {MIN_SAMPLES} samples")
    stat, p = scipy.stats.kstest(a, cdf)
    return TestReport(name, float(stat), float(p), None, len(a), _verdict_from_p(p), seed)


def _merge_tail(observed: np.ndarray, expected: np.ndarray, min_expected: float):
    """Greedy tail merge so every retained bin has the minimum expected count."""
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and obs:
        obs[-1] += acc_o
        exp[-1] += acc_e
    return np.asarray(obs), np.asarray(exp)


def chi_square_pmf(samples, pmf, name: str = "chi2", seed=None, min_expected: float = 5.0) -> TestReport:
    """Goodness of fit of integer samples against a pmf callable.

    Bins are tail-merged until every retained bin expects at least
    ``min_expected`` counts.
    """
    samples = np.asarray(samples, dtype=np.int64)
    n = len(samples)
    if n < MIN_SAMPLES:
        raise TooFewSamples(f"{name}: need >= {MIN_SAMPLES} samples")
    hi = int(samples.max())
    observed = np.bincount(samples, minlength=hi + 1).astype(float)
    expected = np.array([pmf(k) * n for k in range(hi + 1)])
    leftover = max(0.0, n - expected.sum())
    expected = np.append(expected, leftover)
    observed = np.append(observed, 0.0)
    obs, exp = _merge_tail(observed, expected, min_expected)
    if len(obs) < 2 or exp.sum() <= 0:
        raise TooFewSamples(f"{name}: no overlap between samples and pmf support")
    # renormalize the tiny discrepancy from the open tail
    exp *= obs.sum() / exp.sum()
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    p = float(scipy.stats.chi2.sf(stat, dof))
    return TestReport(name, stat, p, None, n, _verdict_from_p(p), seed)


def chi_square_two_sample(a, b, name: str = "chi2-2s", seed=None, min_expected: float = 5.0) -> TestReport:
    """Homogeneity chi-square between two integer sample sets."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if len(a) < MIN_SAMPLES or len(b) < MIN_SAMPLES:
        raise TooFewSamples(f"{name}: need >= {MIN_SAMPLES} samples per side")
    hi = int(max(a.max(), b.max()))
    ca = np.bincount(a, minlength=hi + 1).astype(float)
    cb = np.bincount(b, minlength=hi + 1).astype(float)
    pooled = ca + cb
    ca, _ = _merge_tail(ca, pooled, min_expected)
    cb, _ = _merge_tail(cb, pooled, min_expected)
    table = np.vstack([ca, cb])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        # both samples concentrate on one merged category: identical by fiat
        return TestReport(name, 0.0, 1.0, None, len(a) + len(b), "PASS", seed)
    stat, p, _, _ = scipy.stats.chi2_contingency(table)
    return TestReport(name, float(stat), float(p), None, len(a) + len(b), _verdict_from_p(p), seed)


def binomial_sigma(successes: int, n: int, p: float, name: str = "binom", seed=None) -> TestReport:
    """Deviation of an empirical frequency from p in binomial sigmas."""
    if n < MIN_SAMPLES:
        raise TooFewSamples(f"{name}: need >= {MIN_SAMPLES} trials")
    se = np.sqrt(max(p * (1.0 - p), 1e-300) / n)
    dev = (successes / n - p) / se
    verdict = "PASS" if abs(dev) < SIGMA_THRESHOLD else "FAIL"
    return TestReport(name, successes / n, None, float(dev), n, verdict, seed)


def mean_sigma(samples, target: float, name: str = "mean", seed=None) -> TestReport:
    """Deviation of a sample mean from a target in standard-error units."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    if n < MIN_SAMPLES:
        raise TooFewSamples(f"{name}: need >= {MIN_SAMPLES} samples")
    se = samples.std(ddof=1) / np.sqrt(n)
    dev = (samples.mean() - target) / se if se > 0 else (0.0 if samples.mean() == target else np.inf)
    verdict = "PASS" if abs(dev) < SIGMA_THRESHOLD else "FAIL"
    return TestReport(name, float(samples.mean()), None, float(dev), n, verdict, seed)


def wasserstein_1d(a, b) -> float:
    """L1 coupling distance between two empirical distributions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 1 or len(b) < 1:
        raise TooFewSamples("wasserstein_1d: empty sample")
    return float(scipy.stats.wasserstein_distance(a, b))


def report_table(reports) -> str:
    """Human-readable summary block, one line per report."""
    lines = [str(r) for r in reports]
    total = sum(r.passed for r in reports)
    lines.append(f"{total}/{len(reports)} PASS")
    return "\n".join(lines)
