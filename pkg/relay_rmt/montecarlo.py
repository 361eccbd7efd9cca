'''
Monte Carlo oracle: i.i.d. Rayleigh channel draws, exact spectra of
K_alpha/M, empirical densities and a check of the relay input power model.

Every random draw comes from a Philox stream keyed by (seed, index), so
trial i is reproducible on its own and results never depend on how
trials are spread over threads.
'''
import csv
import io
import logging
import math
import numbers

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from scipy import stats

from relay_rmt.constants import EIGEN_CLAMP, HISTOGRAM_EXTEND,\
     JACOBI_TOLERANCE, JACOBI_MAX_SWEEPS, EIGEN_COLUMNS
from relay_rmt.exceptions import ConfigError, DomainError, NumericalError
from relay_rmt.freeprob import SpectralDensity
from relay_rmt.params import distortion_covariances

__all__ = ("ChannelPair", "EigenSampleSet", "PowerCheckReport",
           "sample_channel_pair", "eigenvalues_k_alpha", "jacobi_eigvalsh",
           "sample_eigenvalues", "empirical_density", "ks_distance",
           "first_hop_power_check", "trial_rng")

logger = logging.getLogger(__name__)

POWER_CHECK_CHUNK = 1000


def trial_rng(seed, index):
    '''Returns the generator of stream index under seed.'''
    if (not isinstance(seed, numbers.Integral) or isinstance(seed, bool)
            or seed < 0):
        raise DomainError("seed must be a non-negative integer, got %r" % (seed, ))
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(index), ))
    return np.random.Generator(np.random.Philox(sequence))


def _complex_gaussian(rng, shape):
    # CN(0, 1): real and imaginary parts each of variance 1/2
    return (rng.standard_normal(shape) +
            1j * rng.standard_normal(shape)) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ChannelPair:
    H1: np.ndarray
    H2: np.ndarray
    seed: int
    trial: int = 0


@dataclass(frozen=True, eq=False)
class EigenSampleSet:
    '''
    Eigenvalues of K_alpha/M pooled over trials. trial_index holds the
    trial each value came from, in the same order as values.
    '''
    values: np.ndarray
    trials: int
    dims: tuple
    alpha_bar: float
    trial_index: np.ndarray = field(default=None, repr=False)

    def mean(self):
        return float(np.mean(self.values))

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(EIGEN_COLUMNS)
        index = self.trial_index
        if index is None:
            index = np.repeat(np.arange(self.trials),
                              len(self.values) // max(self.trials, 1))
        for trial, value in zip(index, self.values):
            writer.writerow((int(trial), "%.17g" % value))
        return buffer.getvalue()


def sample_channel_pair(dims, seed, trial=0):
    '''
    Draws H1 (M x K) and H2 (N x M) with i.i.d. CN(0, 1) entries from the
    stream of trial under seed.
    '''
    K, M, N = dims
    if min(K, M, N) < 1:
        raise DomainError("dimensions must be positive, got %r" % (tuple(dims), ))
    rng = trial_rng(seed, trial)
    H1 = _complex_gaussian(rng, (M, K))
    H2 = _complex_gaussian(rng, (N, M))
    return ChannelPair(H1=H1, H2=H2, seed=seed, trial=trial)


def jacobi_eigvalsh(A, tol=JACOBI_TOLERANCE, max_sweeps=JACOBI_MAX_SWEEPS):
    '''
    Eigenvalues, ascending, of a Hermitian matrix by cyclic Jacobi
    rotations on its real symmetric embedding [[Re, -Im], [Im, Re]].
    The embedding doubles every eigenvalue, so every other one is kept.
    '''
    A = np.asarray(A)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise DomainError("expected a square matrix, got shape %s" % (A.shape, ))

    if np.iscomplexobj(A):
        S = np.block([[A.real, -A.imag], [A.imag, A.real]]).astype(float)
    else:
        S = np.array(A, dtype=float)
    S = 0.5 * (S + S.T)
    size = S.shape[0]
    norm = np.linalg.norm(S)
    if norm == 0:
        return np.zeros(n)

    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(S**2) - np.sum(np.diag(S)**2))
        if off <= tol * norm:
            break
        for p in range(size - 1):
            for q in range(p + 1, size):
                apq = S[p, q]
                if abs(apq) <= tol * norm * 1e-3:
                    continue
                theta = (S[q, q] - S[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = S[:, p].copy(), S[:, q].copy()
                S[:, p] = c * col_p - s * col_q
                S[:, q] = s * col_p + c * col_q
                row_p, row_q = S[p, :].copy(), S[q, :].copy()
                S[p, :] = c * row_p - s * row_q
                S[q, :] = s * row_p + c * row_q
    else:
        raise NumericalError("Jacobi iteration did not converge in %d sweeps"
                             % max_sweeps)

    values = np.sort(np.diag(S))
    return values[::2] if size == 2 * n else values


def eigenvalues_k_alpha(pair, alpha, method="eigh"):
    '''
    Returns the M eigenvalues of K_alpha/M, K_alpha = H2^H H2 (I + alpha H1 H1^H),
    through the Hermitian similarity R (H2^H H2) R with R = (I + alpha H1 H1^H)^(1/2).
    R comes from the eigendecomposition of H1 H1^H. Values down to
    -EIGEN_CLAMP times the spectral scale are clamped to 0.

    method is "eigh" (LAPACK) or "jacobi" (jacobi_eigvalsh).
    '''
    if not alpha >= 0:
        raise DomainError("alpha must be non-negative, got %r" % (alpha, ))
    H1, H2 = pair.H1, pair.H2
    M = H1.shape[0]

    gram_h1 = H1 @ H1.conj().T
    w, V = np.linalg.eigh(0.5 * (gram_h1 + gram_h1.conj().T))
    root = (V * np.sqrt(1.0 + alpha * np.clip(w, 0.0, None))) @ V.conj().T
    product = root @ (H2.conj().T @ H2) @ root
    product = 0.5 * (product + product.conj().T)

    if method == "eigh":
        values = np.linalg.eigvalsh(product)
    elif method == "jacobi":
        values = jacobi_eigvalsh(product)
    else:
        raise DomainError("unknown eigen method %r" % (method, ))

    values = values / M
    scale = max(float(np.max(np.abs(values))), 1.0)
    if np.any(values < -EIGEN_CLAMP * scale):
        raise NumericalError("K_alpha has a negative eigenvalue %r"
                             % float(values.min()))
    return np.clip(values, 0.0, None)


def sample_eigenvalues(dims, alpha_bar, trials, seed=0, method="eigh", jobs=1):
    '''
    Pools the eigenvalues of K_alpha/M over trials channel draws, with
    alpha = alpha_bar/M.
    '''
    if trials < 1:
        raise ConfigError("cannot sample eigenvalues",
                          violations=["trials must be at least 1, got %r" % (trials, )])
    K, M, N = dims
    alpha = alpha_bar / M

    def run(trial):
        return eigenvalues_k_alpha(sample_channel_pair(dims, seed, trial),
                                   alpha, method)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            spectra = list(executor.map(run, range(trials)))
    else:
        spectra = [run(trial) for trial in range(trials)]

    logger.debug("pooled %d trials of %d eigenvalues (alpha_bar=%g, seed=%d)",
                 trials, M, alpha_bar, seed)
    return EigenSampleSet(values=np.concatenate(spectra), trials=trials,
                          dims=tuple(dims), alpha_bar=alpha_bar,
                          trial_index=np.repeat(np.arange(trials), M))


def empirical_density(samples, bins=100):
    '''
    Area normalized histogram of samples on [min, max] widened by
    HISTOGRAM_EXTEND per side, as a SpectralDensity sampled at the bin
    centers. Its normalization_defect is that of the histogram itself.
    '''
    values = np.asarray(getattr(samples, "values", samples), dtype=float)
    if bins < 10:
        raise DomainError("bins must be at least 10, got %r" % (bins, ))
    if values.size == 0:
        raise DomainError("cannot build a histogram from no samples")

    lower, upper = float(values.min()), float(values.max())
    extend = HISTOGRAM_EXTEND * ((upper - lower) or max(abs(lower), 1.0))
    heights, edges = np.histogram(values, bins=bins, density=True,
                                  range=(lower - extend, upper + extend))
    centers = 0.5 * (edges[:-1] + edges[1:])
    defect = abs(float(np.sum(heights * np.diff(edges))) - 1.0)
    return SpectralDensity(grid=centers, values=heights, support=(lower, upper),
                           normalization_defect=defect)


def _as_samples(value):
    if isinstance(value, EigenSampleSet):
        return value.values
    if isinstance(value, SpectralDensity):
        return None
    return np.asarray(value, dtype=float)


def ks_distance(first, second):
    '''
    Kolmogorov-Smirnov distance between two samples (arrays or
    EigenSampleSets), a sample and a SpectralDensity, or two densities.
    '''
    a, b = _as_samples(first), _as_samples(second)
    if a is not None and b is not None:
        return float(stats.ks_2samp(a, b).statistic)
    if a is not None:
        return float(stats.kstest(a, second.cdf).statistic)
    if b is not None:
        return float(stats.kstest(b, first.cdf).statistic)

    grid = np.union1d(first.grid, second.grid)
    return float(np.max(np.abs(first.cdf(grid) - second.cdf(grid))))


@dataclass(frozen=True, eq=False)
class PowerCheckReport:
    '''
    Empirical relay input statistics of sqrt(nu) y1 against the model
    covariance q2 I_M with q2 = mu_tilde nu K.
    '''
    trials: int
    covariance: np.ndarray
    expected_diagonal: float
    diagonal_error: float
    offdiagonal_max: float
    offdiagonal_stderr: float
    total_power: float
    alpha: float

    @property
    def power_ratio(self):
        return self.total_power / self.alpha

    def passes(self, diagonal_tolerance=0.03, power_tolerance=0.02):
        return (self.diagonal_error <= diagonal_tolerance and
                self.offdiagonal_max < 3.0 * self.offdiagonal_stderr and
                self.power_ratio <= 1.0 + power_tolerance)

    def to_dict(self):
        result = asdict(self)
        result["covariance_diagonal"] = np.diag(self.covariance).real.tolist()
        del result["covariance"]
        result["power_ratio"] = self.power_ratio
        return result


def first_hop_power_check(cfg, trials=10000, seed=0):
    '''
    Simulates y1 = H1 (x1 + eta_t1) + eta_r1 + z1 with fresh channels,
    symbols and distortion noises per channel use, and compares the
    empirical covariance of sqrt(nu) y1 with mu_tilde nu K I_M and its
    trace with the power budget alpha.
    '''
    if cfg.nu_mode == "direct":
        raise ConfigError("first hop power check needs the relay gain tied "
                          "to alpha", violations=[
                              "nu_mode must be from-alpha or from-alpha-ideal"])
    if trials < 2:
        raise ConfigError("cannot run power check",
                          violations=["trials must be at least 2, got %r" % (trials, )])

    noise = distortion_covariances(cfg)
    K, M = cfg.K, cfg.M
    gain = math.sqrt(cfg.nu)
    sum_outer = np.zeros((M, M), dtype=complex)

    done = chunk = 0
    while done < trials:
        count = min(POWER_CHECK_CHUNK, trials - done)
        rng = trial_rng(seed, chunk)
        H1 = _complex_gaussian(rng, (count, M, K))
        x1 = math.sqrt(cfg.mu) * _complex_gaussian(rng, (count, K))
        eta_t1 = math.sqrt(noise.eta_t1) * _complex_gaussian(rng, (count, K))
        eta_r1 = math.sqrt(noise.eta_r1) * _complex_gaussian(rng, (count, M))
        z1 = _complex_gaussian(rng, (count, M))

        y1 = gain * (np.einsum("tmk,tk->tm", H1, x1 + eta_t1) + eta_r1 + z1)
        sum_outer += np.einsum("tm,tn->mn", y1, y1.conj())
        done += count
        chunk += 1

    covariance = sum_outer / trials
    diagonal = np.diag(covariance).real
    off = covariance - np.diag(np.diag(covariance))
    # stderr of an off-diagonal sample mean of y_m conj(y_n)
    stderr = math.sqrt(float(np.mean(diagonal))**2 / trials)

    report = PowerCheckReport(
        trials=trials, covariance=covariance,
        expected_diagonal=noise.q2,
        diagonal_error=float(np.max(np.abs(diagonal / noise.q2 - 1.0))),
        offdiagonal_max=float(np.max(np.abs(off))) if M > 1 else 0.0,
        offdiagonal_stderr=stderr,
        total_power=float(np.sum(diagonal)), alpha=cfg.alpha)
    logger.info("first hop power check: diagonal error %.3g, power ratio %.4g",
                report.diagonal_error, report.power_ratio)
    return report
