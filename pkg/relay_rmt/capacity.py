'''
Ergodic capacity per receive antenna, two ways: the asymptotic Shannon
integral over the eigenvalue densities of K_alpha/M, and the exact
finite dimensional log-det expectation sampled by Monte Carlo.

All values are in nats unless a result has been converted with in_units.
'''
import json
import logging
import math
import numbers
import warnings

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, replace

import numpy as np

from scipy import linalg

from relay_rmt import freeprob
from relay_rmt.constants import ALPHA_BAR_FLOOR, CI_Z, DENSITY_POINTS,\
     MASS_TOLERANCE, MASS_REJECT_TOLERANCE, LN2, UNITS
from relay_rmt.exceptions import ConfigError, DomainError, NumericalError,\
     NormalizationWarning
from relay_rmt.montecarlo import sample_channel_pair
from relay_rmt.params import derive_coefficients
from relay_rmt.util import json_safe

__all__ = ("CapacityResult", "shannon_integral", "asymptotic_capacity",
           "logdet_capacity_sample", "logdet_capacity_terms",
           "mc_ergodic_capacity")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CapacityResult:
    '''
    Capacity per receive antenna as the difference c = c1 - c2 of two
    log-det (or Shannon integral) terms.

    trials and ci_halfwidth are only set by Monte Carlo runs,
    quadrature_defect only by asymptotic ones.
    '''
    c1: float
    c2: float
    method: str
    trials: int = None
    ci_halfwidth: float = None
    quadrature_defect: float = None
    units: str = "nats"

    @property
    def c(self):
        return self.c1 - self.c2

    def in_units(self, units):
        '''Returns a copy with every capacity valued field in units.'''
        if units not in UNITS:
            raise DomainError("units must be one of %s, got %r" % (
                ", ".join(UNITS), units))
        if units == self.units:
            return self

        factor = 1.0 / LN2 if units == "bits" else LN2
        ci = self.ci_halfwidth
        return replace(self, c1=self.c1 * factor, c2=self.c2 * factor,
                       ci_halfwidth=None if ci is None else ci * factor,
                       units=units)

    def to_dict(self):
        result = asdict(self)
        result["c"] = self.c
        return result

    def to_json(self, **kwargs):
        return json.dumps(json_safe(self.to_dict()), **kwargs)


def shannon_integral(density, scale):
    '''
    Returns integral ln(1 + scale*x) f(x) dx over density, after
    renormalizing its continuous part so the total mass is 1. An atom
    at zero contributes nothing.

    A mass defect above MASS_TOLERANCE is renormalized with a
    NormalizationWarning. Above MASS_REJECT_TOLERANCE the density is
    too far off to be trusted and NumericalError is raised.
    '''
    if not scale >= 0:
        raise DomainError("scale must be non-negative, got %r" % (scale, ))
    if scale == 0:
        return 0.0

    defect = density.normalization_defect
    if defect > MASS_REJECT_TOLERANCE:
        raise NumericalError(
            "density mass is off by %.3g, beyond the %g that may be "
            "renormalized" % (defect, MASS_REJECT_TOLERANCE))
    if defect > MASS_TOLERANCE:
        warnings.warn(
            "density mass is off by %.3g; the Shannon integral is "
            "renormalized" % defect,
            NormalizationWarning, stacklevel=2)
    return freeprob.expectation(
        density, lambda x: np.log1p(scale * x), renormalize=True)


def asymptotic_capacity(cfg, points=DENSITY_POINTS, y_eps=None,
                        return_densities=False):
    '''
    Large system capacity per receive antenna:
        C = (1/gamma) [ V1 - V2 ]
        Vi = integral ln(1 + f3 M x) f_i(x) dx
    where f_1 is the density of K_alpha/M at alpha_bar = M f1 and f_2 the
    one at alpha_bar = M f2/f3, both from freeprob.aepdf_density. With
    delta_t1 == 0 the second density is the pure Marcenko-Pastur law at
    ratio gamma.

    With return_densities the two densities are returned as well.
    '''
    coeffs = derive_coefficients(cfg)
    scale = coeffs.f3 * cfg.M
    if coeffs.alpha_bar_c2 < ALPHA_BAR_FLOOR:
        logger.debug("alpha_bar_c2=%g: second term uses the closed form "
                     "Marcenko-Pastur law", coeffs.alpha_bar_c2)

    densities = tuple(
        freeprob.aepdf_density(coeffs.beta, coeffs.gamma, alpha_bar, points,
                               y_eps)
        for alpha_bar in (coeffs.alpha_bar_c1, coeffs.alpha_bar_c2))
    c1, c2 = (shannon_integral(density, scale) / coeffs.gamma
              for density in densities)
    if not (math.isfinite(c1) and math.isfinite(c2)):
        raise NumericalError("non-finite capacity terms c1=%r c2=%r" % (c1, c2))

    result = CapacityResult(
        c1=c1, c2=c2, method="asymptotic",
        quadrature_defect=max(d.normalization_defect for d in densities))
    if result.c < 0:
        logger.warning("asymptotic capacity came out negative (%.3g); "
                       "the densities are likely under-resolved", result.c)
    logger.info("asymptotic capacity %.6g nats (c1=%.6g, c2=%.6g, defect=%.2g)",
                result.c, c1, c2, result.quadrature_defect)
    if return_densities:
        return result, densities
    return result


def _check_shapes(H1, H2):
    H1 = np.asarray(H1, dtype=complex)
    H2 = np.asarray(H2, dtype=complex)
    if H1.ndim != 2 or H2.ndim != 2 or H2.shape[1] != H1.shape[0]:
        raise DomainError("expected H1 of shape (M, K) and H2 of shape (N, M), "
                          "got %s and %s" % (H1.shape, H2.shape))
    if not (np.all(np.isfinite(H1)) and np.all(np.isfinite(H2))):
        raise NumericalError("channel matrices contain non-finite entries")
    return H1, H2


def _logdet_hermitian(A):
    # ln det of a Hermitian positive definite matrix from its Cholesky factor
    try:
        factor = linalg.cholesky(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError("matrix is not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(factor).real)))


def _logdet_pair(H1, H2, coeffs):
    '''
    Returns (ln det(Phi + f4 G G^H), ln det Phi) / N with G = H2 H1 and
        Phi = f2 G G^H + f3 H2 H2^H + I_N
    '''
    H1, H2 = _check_shapes(H1, H2)
    N = H2.shape[0]
    G = H2 @ H1
    gram = G @ G.conj().T
    phi = coeffs.f2 * gram + coeffs.f3 * (H2 @ H2.conj().T) + np.eye(N)
    signal = phi + coeffs.f4 * gram
    return _logdet_hermitian(signal) / N, _logdet_hermitian(phi) / N


def logdet_capacity_sample(H1, H2, coeffs):
    '''
    Capacity of one channel realization,
        (1/N) ln det(I_N + f4 H2 H1 H1^H H2^H Phi^-1),
    computed as a difference of Cholesky log-determinants. H1 = 0 gives
    exactly 0.
    '''
    signal, noise = _logdet_pair(H1, H2, coeffs)
    return signal - noise


def logdet_capacity_terms(H1, H2, coeffs):
    '''
    Returns the per realization terms (C1, C2) of the M x M form
        Ci = (1/N) ln det(I_M + f3 H2^H H2 (I_M + a_i H1 H1^H))
    with a_1 = f1 and a_2 = f2/f3. The product is made Hermitian by
    Sylvester's identity around the Cholesky factor L of I + a_i H1 H1^H:
        det(I + f3 A L L^H) = det(I + f3 L^H A L)
    '''
    H1, H2 = _check_shapes(H1, H2)
    M, N = H1.shape[0], H2.shape[0]
    gram_h1 = H1 @ H1.conj().T
    gram_h2 = H2.conj().T @ H2

    terms = []
    for a in (coeffs.f1, coeffs.f2 / coeffs.f3):
        try:
            factor = linalg.cholesky(np.eye(M) + a * gram_h1, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("I + a H1 H1^H is not positive definite") from exc
        inner = factor.conj().T @ gram_h2 @ factor
        inner = 0.5 * (inner + inner.conj().T)
        terms.append(_logdet_hermitian(np.eye(M) + coeffs.f3 * inner) / N)
    return tuple(terms)


def _trial_terms(cfg, coeffs, seed, trial):
    pair = sample_channel_pair(cfg.dims, seed, trial)
    return _logdet_pair(pair.H1, pair.H2, coeffs)


def mc_ergodic_capacity(cfg, trials, seed=0, jobs=1):
    '''
    Sample mean of logdet_capacity_sample over trials i.i.d. Rayleigh
    channel draws. Trial i always uses the stream derived from
    (seed, i), so the result does not depend on jobs.

    ci_halfwidth is CI_Z times the standard error of the per trial
    capacity, and None when trials == 1.
    '''
    if not isinstance(trials, numbers.Integral) or trials < 1:
        raise ConfigError("cannot run Monte Carlo",
                          violations=["trials must be at least 1, got %r" % (trials, )])
    coeffs = derive_coefficients(cfg)

    def run(trial):
        return _trial_terms(cfg, coeffs, seed, trial)

    if jobs > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            samples = np.array(list(executor.map(run, range(trials))))
    else:
        samples = np.array([run(trial) for trial in range(trials)])

    c1, c2 = samples.mean(axis=0)
    capacity = samples[:, 0] - samples[:, 1]
    if trials > 1:
        ci = CI_Z * float(capacity.std(ddof=1)) / math.sqrt(trials)
    else:
        ci = None
        logger.warning("a single Monte Carlo trial gives no confidence interval")

    result = CapacityResult(c1=float(c1), c2=float(c2), method="montecarlo",
                            trials=trials, ci_halfwidth=ci)
    logger.info("Monte Carlo capacity %.6g nats over %d trials (seed %d, ci %s)",
                result.c, trials, seed, "n/a" if ci is None else "%.3g" % ci)
    return result
