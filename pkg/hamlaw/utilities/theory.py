from fractions import Fraction
from math import exp
from math import floor
from math import fsum
from math import log
from math import pi
from math import sqrt

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import integrate
from scipy import stats

import hamlaw.utilities.data_models as models
import hamlaw.utilities.structures as structures
from hamlaw.configs.config import Settings
from hamlaw.configs.config import get_logger
from hamlaw.configs.config import get_settings
from hamlaw.utilities.errors import InfeasibleConfigurationError
from hamlaw.utilities.errors import InvalidArgumentError
from hamlaw.utilities.errors import NumericalFailureError
from hamlaw.utilities.errors import ResourceLimitError
from hamlaw.utilities.rng import Purpose
from hamlaw.utilities.rng import generator

logger = get_logger()

HERMITE_MAX_ORDER = 256
LOG_SCALE_HALF_WIDTH = 12.0


def p_star(n: int, params: models.Params, c: float = 1.0) -> float:
    """First-moment threshold density c * lambda * e^s / n^s."""
    return c * params.lambda_ * exp(params.s) / n**params.s


def density_ratio(n: int, params: models.Params) -> float:
    """Finite-n c_n = p / p*(n), the plug-in density ratio used by the experiments."""
    return params.p / p_star(n, params, 1.0)


def expected_z(
    n: int, params: models.Params, p: float | Fraction, settings: Settings | None = None
) -> models.ExpectedCount:
    """E[Z] = N_C p^m with m = n / s.

    Args:
        n (int): Vertex count, divisible by s.
        params (models.Params): Supplies r and ell.
        p (float | Fraction): Edge density; a float is taken at its exact binary value.

    Returns:
        models.ExpectedCount: exact rational value and its float.
    """
    s = params.s
    if n % s:
        raise InvalidArgumentError(f"s = {s} does not divide n = {n}")
    if not 0 <= p <= 1:
        raise InvalidArgumentError(f"p must lie in [0, 1], got {p}")
    m = n // s
    n_c = structures.n_cycles_complete(n, params.r, params.ell, settings)
    exact = n_c * Fraction(p) ** m
    if exact == 0:
        return models.ExpectedCount(exact=exact, value=0.0)
    try:
        value = float(exact)
    except OverflowError:
        value = exp(log(n_c) + m * log(float(p)))
    return models.ExpectedCount(exact=exact, value=value)


def p_for_expectation(
    n: int, params: models.Params, target_m: float, settings: Settings | None = None
) -> float:
    """Density p = (target_m / N_C)^(s/n) at which E[Z] equals target_m."""
    if target_m <= 0:
        raise InvalidArgumentError(f"target_m must be positive, got {target_m}")
    s = params.s
    if n % s:
        raise InvalidArgumentError(f"s = {s} does not divide n = {n}")
    n_c = structures.n_cycles_complete(n, params.r, params.ell, settings)
    p = exp((log(target_m) - log(n_c)) / (n // s))
    if p > 1 + 1e-12:
        raise InfeasibleConfigurationError(
            f"E[Z] = {target_m} needs p = {p} > 1 (N_C = {n_c})"
        )
    return min(p, 1.0)


def _series_terms(
    r: int, ell: int, c: float, K: int, settings: Settings | None = None
) -> list[float]:
    if c <= 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    s, _, _ = structures.derive_constants(r, ell)
    table = structures.compute_A_table(r, ell, K, settings)
    return [
        float(table.values[k - 1]) * c ** (-k) * exp(-k * s) / s**2
        for k in range(1, K + 1)
    ]


def series_tail(
    r: int, ell: int, c: float, K: int, settings: Settings | None = None
) -> float:
    """Sum over k > K of A_k c^-k e^-ks / s^2.

    Terms before k_stab are summed explicitly; from k_stab on A_k is constant and the
    remainder is geometric with ratio 1 / (c e^s).
    """
    s, _, _ = structures.derive_constants(r, ell)
    if c <= 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    ratio = 1.0 / (c * exp(s))
    if ratio >= 1:
        raise InvalidArgumentError(f"Series diverges: c e^s = {1 / ratio} <= 1")
    table = structures.compute_A_table(r, ell, K, settings)
    if table.k_stab is None:
        raise ResourceLimitError(
            f"A_k not stabilized for (r={r}, ell={ell}); no tail bound"
        )
    explicit = 0.0
    if K + 1 < table.k_stab:
        head = structures.compute_A_table(r, ell, table.k_stab - 1, settings)
        explicit = fsum(
            float(head.values[k - 1]) * ratio**k for k in range(K + 1, table.k_stab)
        )
    start = max(K + 1, table.k_stab)
    geometric = float(table.a_stab) * ratio**start / (1 - ratio)
    return (explicit + geometric) / s**2


def lognormal_params(
    params: models.Params, c: float, K: int, settings: Settings | None = None
) -> models.LimitLawParams:
    """Lognormal limit law truncated at K, with the omitted variance as tail."""
    terms = _series_terms(params.r, params.ell, c, K, settings)
    sigma2 = fsum(terms)
    return models.LimitLawParams(
        mu=-sigma2 / 2,
        sigma2=sigma2,
        K=K,
        tail=series_tail(params.r, params.ell, c, K, settings),
        c=c,
    )


def second_moment_ratio_bound(
    n: int, params: models.Params, c: float, K: int, settings: Settings | None = None
) -> float:
    """exp(n^(2-ell) * sigma^2_K), the finite-n reference for E[Z^2] / E[Z]^2."""
    sigma2 = fsum(_series_terms(params.r, params.ell, c, K, settings))
    return exp(n ** (2 - params.ell) * sigma2)


def default_truncation(table: models.ATable) -> int:
    return 8 if table.k_stab is None else max(table.k_stab + 5, 8)


def harness_truncation(n: int, settings: Settings | None = None) -> int:
    """K = min(floor(log n), k_max), at least 1."""
    settings = settings or get_settings()
    return max(1, min(floor(log(n)), settings.k_max))


def _lognormal_expectation(func, law: models.LimitLawParams, settings: Settings) -> float:
    """E[func(L)] for L = e^W, W ~ Normal(mu, sigma2), on the log scale.

    Gauss-Hermite with the order doubled until successive values agree to
    quadrature_tol. Orders above HERMITE_MAX_ORDER lose precision in the nodes, so an
    unsettled rule hands over to adaptive quadrature over mu +- 12 sigma.
    """
    if law.sigma2 == 0:
        return float(np.asarray(func(np.array([exp(law.mu)])), dtype=float)[0])
    spread = sqrt(2 * law.sigma2)
    max_order = min(settings.quadrature_max_order, HERMITE_MAX_ORDER)
    order = 16
    previous = None
    while order <= max_order:
        nodes, weights = hermgauss(order)
        values = np.asarray(func(np.exp(law.mu + spread * nodes)), dtype=float)
        current = float(np.dot(weights, values) / sqrt(pi))
        if not np.isfinite(current):
            break
        if previous is not None and abs(current - previous) <= settings.quadrature_tol:
            return current
        if previous is not None:
            change = abs(current - previous)
            logger.debug(f"Quadrature order {order}: change {change:.3e}")
        previous = current
        order *= 2

    scale = sqrt(law.sigma2)

    def integrand(z: float) -> float:
        value = np.asarray(func(np.array([exp(law.mu + scale * z)])), dtype=float)[0]
        return float(value) * stats.norm.pdf(z)

    value, abserr, info, *message = integrate.quad(
        integrand,
        -LOG_SCALE_HALF_WIDTH,
        LOG_SCALE_HALF_WIDTH,
        epsabs=settings.quadrature_tol,
        epsrel=0.0,
        limit=settings.quadrature_max_order,
        full_output=1,
    )
    logger.debug(f"Adaptive quadrature after order {order // 2}: error {abserr:.3e}")
    if np.isfinite(value) and abserr <= settings.quadrature_tol:
        return float(value)
    raise NumericalFailureError(
        "Log-scale quadrature did not reach quadrature_tol",
        diagnostics={
            "last_order": order // 2,
            "last_value": previous,
            "adaptive_value": float(value),
            "adaptive_error": float(abserr),
            "subintervals": int(info["last"]),
            "message": message[0] if message else None,
            "law": law.model_dump(),
        },
    )


def mixture_pmf_cdf(
    m: float, law: models.LimitLawParams, j: int, settings: Settings | None = None
) -> float:
    """P(Pois(m L) <= j) for L ~ Lognormal(mu, sigma2)."""
    settings = settings or get_settings()
    if m <= 0:
        raise InvalidArgumentError(f"m must be positive, got {m}")
    if j < 0:
        return 0.0
    return _lognormal_expectation(lambda z: stats.poisson.cdf(j, m * z), law, settings)


def mixture_pmf(
    m: float, law: models.LimitLawParams, j: int, settings: Settings | None = None
) -> float:
    settings = settings or get_settings()
    if m <= 0:
        raise InvalidArgumentError(f"m must be positive, got {m}")
    if j < 0:
        return 0.0
    return _lognormal_expectation(lambda z: stats.poisson.pmf(j, m * z), law, settings)


def lognormal_mean(law: models.LimitLawParams, settings: Settings | None = None) -> float:
    return _lognormal_expectation(lambda z: z, law, settings or get_settings())


def mixture_variance(m: float, law: models.LimitLawParams) -> float:
    return m + m**2 * (exp(law.sigma2) - 1)


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise InvalidArgumentError("Samples must not be empty")
    return x


def ks_distance(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_n - F|.

    The supremum is taken at every sample point and at its left limit, so atoms of F
    (and ties in the sample) are handled exactly. cdf must accept numpy arrays.
    """
    x = np.sort(_as_samples(samples))
    size = x.size
    at = np.asarray(cdf(x), dtype=float)
    before = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=float)
    empirical_at = np.searchsorted(x, x, side="right") / size
    empirical_before = np.searchsorted(x, x, side="left") / size
    gap_at = np.max(np.abs(empirical_at - at))
    gap_before = np.max(np.abs(empirical_before - before))
    return float(max(gap_at, gap_before))


def ks_test(samples, cdf) -> tuple[float, float]:
    """KS distance and its p-value under the exact two-sided null distribution."""
    distance = ks_distance(samples, cdf)
    return distance, float(stats.kstwo.sf(distance, np.size(samples)))


def dispersion(samples) -> float:
    """Sample variance over sample mean; 1 for Poisson data."""
    x = _as_samples(samples)
    if x.size < 2:
        raise InvalidArgumentError("Dispersion needs at least two samples")
    mean = float(np.mean(x))
    if mean == 0:
        raise InvalidArgumentError("Dispersion undefined for zero sample mean")
    return float(np.var(x, ddof=1)) / mean


def le_cam_bound(z_prime: float, m: float, logn: float) -> float:
    """Total-variation bound Z' (m / log n)^2 for the thinning step.

    The bound is linear in Z', so passing E[Z'] gives the bound on the unconditional
    law: TV of a mixture is at most the mean of the conditional TVs.
    """
    if logn <= 0:
        raise InvalidArgumentError("log n must be positive")
    return z_prime * (m / logn) ** 2


def tv_distance(samples, pmf) -> float:
    """Total variation between the empirical law of integer samples and a pmf on 0, 1, ...

    pmf must accept an integer numpy array. Model mass beyond the largest sample counts
    in full.
    """
    x = _as_samples(samples).astype(np.int64)
    if np.any(x < 0):
        raise InvalidArgumentError("Samples must be non-negative integers")
    support = np.arange(int(x.max()) + 1)
    empirical = np.bincount(x, minlength=support.size) / x.size
    model = np.asarray(pmf(support), dtype=float)
    beyond = max(0.0, 1.0 - float(model.sum()))
    return 0.5 * (float(np.abs(empirical - model).sum()) + beyond)


def poisson_pmf(m: float):
    return lambda j: stats.poisson.pmf(j, m)


def mixture_pmf_function(
    m: float, law: models.LimitLawParams, settings: Settings | None = None
):
    def pmf(js):
        return np.array(
            [mixture_pmf(m, law, int(j), settings) for j in np.atleast_1d(js)]
        )

    return pmf


def bootstrap_band(
    samples,
    seed: models.Seed,
    statistic=np.mean,
    n_boot: int = 1000,
    width: float = 4.0,
) -> tuple[float, float, float]:
    """Point estimate and a band of +/- width bootstrap standard errors.

    Args:
        samples (array-like):
            Observations.
        seed (models.Seed):
            Seed of the resampling stream.
        statistic (callable, optional):
            Called as statistic(array, axis=...); defaults to the mean.
        n_boot (int, optional):
            Bootstrap resamples.
        width (float, optional):
            Band half-width in standard errors.

    Returns:
        tuple[float, float, float]:
            (estimate, lower, upper).
    """
    x = _as_samples(samples)
    rng = generator(seed, Purpose.BOOTSTRAP)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    replicates = statistic(x[idx], axis=1)
    estimate = float(statistic(x, axis=0))
    se = float(np.std(replicates, ddof=1))
    return estimate, estimate - width * se, estimate + width * se


def evaluate_gate(
    name: str,
    value: float | None,
    bounds: tuple[float | None, float | None],
    n_trials: int = 0,
    seed: models.Seed | None = None,
) -> models.TestReport:
    lower, upper = bounds
    passed = value is not None and not np.isnan(value)
    if passed and lower is not None:
        passed = value >= lower
    if passed and upper is not None:
        passed = value <= upper
    return models.TestReport(
        statistic_name=name,
        value=value,
        lower=lower,
        upper=upper,
        passed=bool(passed),
        n_trials=n_trials,
        seed=seed,
    )
