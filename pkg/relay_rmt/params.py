'''
System configuration of a dual-hop amplify-and-forward relay with
residual transceiver impairments, its validation, and the closed-form
coefficients every capacity computation is built from.

All arithmetic here is linear scale double precision. Conversion from
decibels happens in the command line layer only.
'''
import logging
import math
import numbers

from dataclasses import dataclass, field, replace, asdict

from relay_rmt.constants import NU_MODES
from relay_rmt.exceptions import ConfigError

__all__ = ("SystemConfig", "Coefficients", "DistortionCovariances",
           "validate_config", "derive_coefficients", "nu_from_alpha",
           "distortion_covariances")

logger = logging.getLogger(__name__)

DELTA_FIELDS = ("delta_t1", "delta_r1", "delta_t2", "delta_r2")
NU_AGREEMENT = 1e-12


def _mu_tilde(K, mu, delta_t1, delta_r1):
    return mu * (1.0 + delta_t1**2 + delta_r1**2) + 1.0 / K


def nu_from_alpha(alpha, K, M, mu, delta_t1=0.0, delta_r1=0.0, ideal=False):
    '''
    Returns the fixed relay gain meeting the power budget alpha.

    With impairments the relay input covariance is mu_tilde*nu*K*I_M so
    nu = alpha/(K*M*mu_tilde). The ideal model (no distortion noise)
    normalizes by the total received power instead: nu = alpha/(M*(1+rho))
    with rho = mu*K.
    '''
    if ideal:
        return alpha / (M * (1.0 + mu * K))
    return alpha / (K * M * _mu_tilde(K, mu, delta_t1, delta_r1))


@dataclass(frozen=True)
class SystemConfig:
    '''
    Physical inputs of one relay system.

    Instance properties:
        int:
            K ------- single antenna users
            M ------- relay antennas
            N ------- base station antennas
        float:
            mu ------ per user SNR, linear (mu = rho/K)
            nu ------ relay amplification gain, linear
            delta_t1, delta_r1, delta_t2, delta_r2 -- impairment levels
            alpha --- relay power budget, only read in the alpha modes
        str:
            nu_mode - one of "direct", "from-alpha", "from-alpha-ideal"

    In the alpha modes nu is recomputed from alpha on construction and
    any disagreeing user supplied nu is overwritten.
    '''
    K: int = 50
    M: int = 10
    N: int = 100
    mu: float = 100.0
    nu: float = 100.0
    delta_t1: float = 0.0
    delta_r1: float = 0.0
    delta_t2: float = 0.0
    delta_r2: float = 0.0
    nu_mode: str = "direct"
    alpha: float = None

    def __post_init__(self):
        if self.nu_mode not in ("from-alpha", "from-alpha-ideal"):
            return
        # leave malformed configs alone. validate_config reports them
        if validate_config(self, check_nu=False):
            return

        nu = nu_from_alpha(self.alpha, self.K, self.M, self.mu,
                           self.delta_t1, self.delta_r1,
                           ideal=self.nu_mode == "from-alpha-ideal")
        if (self.nu is not None and
                abs(self.nu - nu) <= NU_AGREEMENT * abs(nu)):
            return

        if self.nu is not None:
            logger.warning("nu=%r disagrees with alpha=%r in %s mode; "
                           "using nu=%r", self.nu, self.alpha,
                           self.nu_mode, nu)
        object.__setattr__(self, "nu", nu)

    @property
    def rho(self):
        '''Total user power, rho = mu*K.'''
        return self.mu * self.K

    @property
    def dims(self):
        return (self.K, self.M, self.N)

    def with_delta(self, delta):
        '''Returns a copy with all four impairment levels set to delta.'''
        return self.replace(**{name: delta for name in DELTA_FIELDS})

    def replace(self, **changes):
        '''
        Returns a copy with the given fields changed. In the alpha modes
        nu is derived again unless the caller supplies it.
        '''
        if self.nu_mode != "direct":
            changes.setdefault("nu", None)
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


def validate_config(cfg, check_nu=True):
    '''
    Returns a list of violation strings, each naming the offending field.
    An empty list means cfg satisfies every invariant.
    '''
    violations = []
    for name in ("K", "M", "N"):
        value = getattr(cfg, name)
        if not isinstance(value, numbers.Integral) or isinstance(value, bool):
            violations.append("%s must be an integer count, got %r" % (
                name, value))
        elif value < 1:
            violations.append("%s must be at least 1, got %r" % (name, value))

    if not _is_real(cfg.mu) or not cfg.mu > 0:
        violations.append("mu must be positive, got %r" % (cfg.mu, ))

    for name in DELTA_FIELDS:
        value = getattr(cfg, name)
        if not _is_real(value):
            violations.append("%s must be a finite number, got %r" % (
                name, value))
        elif value < 0:
            violations.append("%s must be non-negative, got %r" % (
                name, value))

    if cfg.nu_mode not in NU_MODES:
        violations.append("nu_mode must be one of %s, got %r" % (
            ", ".join(NU_MODES), cfg.nu_mode))
    elif cfg.nu_mode != "direct":
        if not _is_real(cfg.alpha) or not cfg.alpha > 0:
            violations.append("alpha must be positive in %s mode, got %r" % (
                cfg.nu_mode, cfg.alpha))

    if check_nu and (not _is_real(cfg.nu) or not cfg.nu > 0):
        violations.append("nu must be positive, got %r" % (cfg.nu, ))

    return violations


def _is_real(value):
    return (isinstance(value, numbers.Real) and not isinstance(value, bool)
            and math.isfinite(value))


@dataclass(frozen=True)
class Coefficients:
    '''
    Closed-form algebra derived from a SystemConfig.

    f1*f3 == f2 + f4 by construction. alpha_bar_c1 and alpha_bar_c2 are
    the M-scaled gains of the two eigenvalue laws the capacity integrates.
    '''
    beta: float
    gamma: float
    mu_tilde: float
    B: float
    f1: float
    f2: float
    f3: float
    f4: float
    alpha_bar_c1: float
    alpha_bar_c2: float

    def to_dict(self):
        return asdict(self)


def derive_coefficients(cfg):
    '''
    Computes every coefficient of the capacity expression from cfg.

    Raises ConfigError listing all violations if cfg is invalid.
    '''
    violations = validate_config(cfg)
    if violations:
        raise ConfigError("cannot derive coefficients", violations=violations)

    K, M, N = cfg.K, cfg.M, cfg.N
    mu, nu = float(cfg.mu), float(cfg.nu)

    mu_tilde = _mu_tilde(K, mu, cfg.delta_t1, cfg.delta_r1)
    B = cfg.delta_r2**2 * mu_tilde * nu * K * M + 1.0
    f4 = mu * nu / B
    f2 = f4 * cfg.delta_t1**2
    f3 = nu * (cfg.delta_t2**2 * mu_tilde * K +
               cfg.delta_r1**2 * mu * K + 1.0) / B
    f1 = (f2 + f4) / f3

    return Coefficients(
        beta=K / M, gamma=N / M, mu_tilde=mu_tilde, B=B,
        f1=f1, f2=f2, f3=f3, f4=f4,
        alpha_bar_c1=M * f1, alpha_bar_c2=M * f2 / f3,
        )


@dataclass(frozen=True)
class DistortionCovariances:
    '''
    Per-entry variances of the four distortion noises and the
    diagonal of the relay transmit covariance Q2 = mu_tilde*nu*K*I_M.
    '''
    eta_t1: float
    eta_r1: float
    eta_t2: float
    eta_r2: float
    q2: float
    relay_power: float = field(default=0.0)

    def to_dict(self):
        return asdict(self)


def distortion_covariances(cfg):
    '''
    Returns the distortion noise variances implied by cfg:
        eta_t1 ~ CN(0, delta_t1^2 * mu)
        eta_r1 ~ CN(0, delta_r1^2 * rho)
        eta_t2 ~ CN(0, delta_t2^2 * mu_tilde*nu*K)
        eta_r2 ~ CN(0, delta_r2^2 * mu_tilde*nu*K*M)
    relay_power is the expected total power tr(Q2) = mu_tilde*nu*K*M.
    '''
    coeffs = derive_coefficients(cfg)
    q2 = coeffs.mu_tilde * cfg.nu * cfg.K
    return DistortionCovariances(
        eta_t1=cfg.delta_t1**2 * cfg.mu,
        eta_r1=cfg.delta_r1**2 * cfg.rho,
        eta_t2=cfg.delta_t2**2 * q2,
        eta_r2=cfg.delta_r2**2 * q2 * cfg.M,
        q2=q2,
        relay_power=q2 * cfg.M,
        )
