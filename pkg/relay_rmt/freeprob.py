'''
Free probability transforms of the eigenvalue laws behind the relay
capacity: Marcenko-Pastur densities, eta/S/Stieltjes transforms, the
quartic Stieltjes equation of K_alpha/M = (H2^H H2/M)(I + alpha H1 H1^H),
and extraction of its asymptotic eigenvalue density.

Conventions used throughout:
    stieltjes   S(z)  = integral f(x)/(x - z) dx       (Im S > 0 on Im z > 0)
    eta         eta(p) = integral f(x)/(1 + p*x) dx
    shannon     V(p)   = integral ln(1 + p*x) f(x) dx
    mp law at ratio r: mean r, support [(1-sqrt r)^2, (1+sqrt r)^2]
                       and an atom (1-r)^+ at zero.

Every function here is pure. Nothing is cached or mutated, so grids can
be evaluated from several threads at once.
'''
import csv
import io
import json
import logging
import math

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from scipy import integrate

from relay_rmt.constants import ALPHA_BAR_FLOOR, DENSITY_POINTS,\
     SUPPORT_THRESHOLD, Y_EPS_FRACTION, REFINEMENT_TOLERANCE, BULK_PAD,\
     BULK_SCAN_POINTS, BULK_SCAN_RANGE, BULK_SCAN_Y_FRACTION, BULK_THRESHOLD,\
     MIN_BULK_POINTS, GRID_DOUBLINGS,\
     MASS_TOLERANCE, ROOT_RESIDUAL_TOLERANCE, ROOT_FILTER_TOLERANCE,\
     NEWTON_POLISH_STEPS, HOMOTOPY_STEPS, IMAG_SIGN_TOLERANCE, DENSITY_COLUMNS
from relay_rmt.exceptions import DomainError, NoValidRootError

__all__ = (
    "SpectralDensity", "StieltjesSample", "EdgeForm",
    "mp_support", "mp_density", "mp_atom", "mp_eta", "mp_shannon",
    "mp_stieltjes", "m_alpha_support", "m_alpha_density", "m_alpha_eta",
    "expectation", "eta_numeric", "inverse_eta_m_alpha", "s_transform_n2",
    "inverse_eta_k_alpha", "quartic_coefficients", "quartic_roots",
    "fixed_point_residual", "stieltjes_k_alpha", "stieltjes_k_alpha_line",
    "k_alpha_bounds", "aepdf_bulks", "aepdf_grid", "aepdf_k_alpha",
    "aepdf_density",
    )

logger = logging.getLogger(__name__)


# continuous part = smooth(x) * (x - lower)**lower_power * (upper - x)**upper_power
# on [lower, upper]. Lets closed form laws be integrated by quad with
# an algebraic weight instead of by sampling their square root edges.
EdgeForm = namedtuple(
    "EdgeForm", ("smooth", "lower", "upper", "lower_power", "upper_power"))


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    '''
    A sampled eigenvalue density.

    Instance properties:
        ndarray:
            grid ------------- ascending abscissae
            values ----------- density samples, >= 0
        tuple:
            support ---------- (lower, upper) of the continuous part
            extra_atoms ------ ((location, mass), ...) point masses away
                               from zero
        float:
            atom_at_zero ----- mass of the Dirac component at zero
            normalization_defect -- |total mass - 1|
            refinement_gap --- relative density change between y_eps
                               and y_eps/2 (Stieltjes inversion only)
            max_residual ----- largest fixed point residual of the
                               selected Stieltjes roots
        EdgeForm:
            edge_form -------- closed form of the continuous part, or None
    '''
    grid: np.ndarray
    values: np.ndarray
    support: tuple
    atom_at_zero: float = 0.0
    normalization_defect: float = None
    extra_atoms: tuple = ()
    refinement_gap: float = 0.0
    max_residual: float = 0.0
    edge_form: EdgeForm = field(default=None, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise DomainError("grid and values must be 1-d and equal length")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly ascending")

        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support", tuple(float(s) for s in self.support))
        object.__setattr__(self, "extra_atoms", tuple(
            (float(loc), float(mass)) for loc, mass in self.extra_atoms))
        if self.normalization_defect is None:
            object.__setattr__(self, "normalization_defect",
                               abs(self.mass() - 1.0))

    @classmethod
    def point_mass(cls, x0):
        '''A unit point mass at x0.'''
        x0 = float(x0)
        if x0 == 0.0:
            return cls(grid=[0.0], values=[0.0], support=(0.0, 0.0),
                       atom_at_zero=1.0)
        return cls(grid=[x0], values=[0.0], support=(x0, x0),
                   extra_atoms=((x0, 1.0), ))

    @classmethod
    def from_mp(cls, ratio, points=DENSITY_POINTS):
        '''
        The Marcenko-Pastur law at ratio, sampled on a grid whose points
        cluster at the square root edges of the support.
        '''
        lower, upper = mp_support(ratio)
        grid = _edge_clustered_grid(lower, upper, points)
        if lower == 0.0:
            form = EdgeForm(lambda x: np.full_like(np.asarray(x, float), 0.5 / np.pi),
                            lower, upper, -0.5, 0.5)
        else:
            form = EdgeForm(lambda x: 0.5 / (np.pi * np.asarray(x, float)),
                            lower, upper, 0.5, 0.5)
        return cls(grid=grid, values=mp_density(grid, ratio),
                   support=(lower, upper), atom_at_zero=mp_atom(ratio),
                   edge_form=form)

    @classmethod
    def from_m_alpha(cls, beta, alpha_bar, points=DENSITY_POINTS):
        '''
        The law of I + alpha_bar*W with W Marcenko-Pastur at ratio beta.
        For beta < 1 it carries an atom of mass 1 - beta at x = 1.
        '''
        if alpha_bar < ALPHA_BAR_FLOOR:
            _check_non_negative("alpha_bar", alpha_bar)
            return cls.point_mass(1.0)

        lower, upper = m_alpha_support(beta, alpha_bar)
        grid = _edge_clustered_grid(lower, upper, points)
        scale = 0.5 / (np.pi * alpha_bar)
        if beta == 1.0:
            form = EdgeForm(lambda x: np.full_like(np.asarray(x, float), scale),
                            lower, upper, -0.5, 0.5)
        else:
            form = EdgeForm(lambda x: scale / (np.asarray(x, float) - 1.0),
                            lower, upper, 0.5, 0.5)
        atoms = ((1.0, mp_atom(beta)), ) if beta < 1.0 else ()
        return cls(grid=grid, values=m_alpha_density(grid, beta, alpha_bar),
                   support=(lower, upper), extra_atoms=atoms, edge_form=form)

    def atom_mass(self):
        return self.atom_at_zero + sum(mass for _, mass in self.extra_atoms)

    def continuous_mass(self):
        if self.edge_form is not None:
            return _edge_form_integral(self.edge_form, None)
        if self.grid.size < 2:
            return 0.0
        return float(integrate.trapezoid(self.values, self.grid))

    def mass(self):
        return self.atom_mass() + self.continuous_mass()

    def mean(self):
        return expectation(self, lambda x: x)

    def cdf(self, x):
        '''
        Cumulative distribution at x (scalar or array), interpolated
        linearly between grid points of the running trapezoid integral.
        '''
        x = np.asarray(x, dtype=float)
        if self.grid.size > 1:
            running = integrate.cumulative_trapezoid(
                self.values, self.grid, initial=0.0)
            result = np.interp(x, self.grid, running, left=0.0,
                               right=running[-1])
        else:
            result = np.zeros_like(x)

        result = result + self.atom_at_zero * (x >= 0.0)
        for location, mass in self.extra_atoms:
            result = result + mass * (x >= location)
        return result

    def header(self):
        return {
            "support": list(self.support),
            "atom_at_zero": self.atom_at_zero,
            "extra_atoms": [list(atom) for atom in self.extra_atoms],
            "normalization_defect": self.normalization_defect,
            "refinement_gap": self.refinement_gap,
            "max_residual": self.max_residual,
            }

    def to_csv(self):
        '''
        Returns the density as CSV text. The first line is a "#" comment
        holding a JSON object with support, atoms and defects, followed by
        an "x,density" header row and one row per grid point.
        '''
        buffer = io.StringIO()
        buffer.write("# %s\n" % json.dumps(self.header(), sort_keys=True))
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(DENSITY_COLUMNS)
        for x, value in zip(self.grid, self.values):
            writer.writerow(("%.17g" % x, "%.17g" % value))
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise DomainError("density CSV must start with a JSON header line")

        header = json.loads(lines[0][1:])
        rows = list(csv.reader(lines[2:]))
        grid = [float(row[0]) for row in rows]
        values = [float(row[1]) for row in rows]
        return cls(grid=grid, values=values, support=header["support"],
                   atom_at_zero=header["atom_at_zero"],
                   extra_atoms=header.get("extra_atoms", ()),
                   normalization_defect=header["normalization_defect"],
                   refinement_gap=header.get("refinement_gap", 0.0),
                   max_residual=header.get("max_residual", 0.0))


@dataclass(frozen=True, eq=False)
class StieltjesSample:
    '''
    One evaluation of the Stieltjes transform of K_alpha/M: the argument,
    all four quartic roots, the index of the selected one, its value and
    its fixed point residual.
    '''
    z: complex
    roots: np.ndarray
    selected: int
    value: complex
    residual: float


def _check_ratio(ratio):
    if not ratio > 0:
        raise DomainError("ratio must be positive, got %r" % (ratio, ))


def _check_non_negative(name, value):
    if not value >= 0:
        raise DomainError("%s must be non-negative, got %r" % (name, value))


def _edge_clustered_grid(lower, upper, points):
    # cosine spacing puts most points where sqrt edges change fastest
    theta = np.linspace(0.0, np.pi, points)
    grid = lower + (upper - lower) * 0.5 * (1.0 - np.cos(theta))
    grid[0], grid[-1] = lower, upper
    return grid


# ###########################################
# ----      Marcenko-Pastur closed forms     #
# ###########################################

def mp_support(ratio):
    '''Returns the (lower, upper) support edges of the mp law at ratio.'''
    _check_ratio(ratio)
    root = math.sqrt(ratio)
    return (1.0 - root)**2, (1.0 + root)**2


def mp_density(x, ratio):
    '''
    Continuous part sqrt((x-a)^+ (b-x)^+)/(2 pi x) of the Marcenko-Pastur
    law at ratio. Zero outside (a, b). The atom is reported by mp_atom.
    '''
    lower, upper = mp_support(ratio)
    x = np.asarray(x, dtype=float)
    inside = (x > lower) & (x < upper) & (x > 0.0)
    safe_x = np.where(inside, x, 1.0)
    values = np.where(
        inside,
        np.sqrt(np.clip((safe_x - lower) * (upper - safe_x), 0.0, None)) /
        (2.0 * np.pi * safe_x),
        0.0)
    return values if values.ndim else float(values)


def mp_atom(ratio):
    _check_ratio(ratio)
    return max(0.0, 1.0 - ratio)


def _mp_f(psi, ratio):
    root = math.sqrt(ratio)
    return (np.sqrt(psi * (1.0 + root)**2 + 1.0) -
            np.sqrt(psi * (1.0 - root)**2 + 1.0))**2


def mp_eta(psi, ratio):
    '''
    Closed form eta transform of the mp law at ratio:
        eta(psi) = 1 - F(psi, r)/(4 psi)
        F(x, z) = (sqrt(x(1+sqrt z)^2 + 1) - sqrt(x(1-sqrt z)^2 + 1))^2
    '''
    _check_ratio(ratio)
    psi = np.asarray(psi, dtype=float)
    safe = np.where(psi > 0, psi, 1.0)
    values = np.where(psi > 0, 1.0 - _mp_f(safe, ratio) / (4.0 * safe), 1.0)
    return values if values.ndim else float(values)


def mp_shannon(psi, ratio):
    '''
    Closed form Shannon transform (nats) of the mp law at ratio:
        V(psi) = r ln(1 + psi - F/4) + ln(1 + psi r - F/4) - F/(4 psi)
    '''
    _check_ratio(ratio)
    psi = np.asarray(psi, dtype=float)
    safe = np.where(psi > 0, psi, 1.0)
    quarter_f = _mp_f(safe, ratio) / 4.0
    values = np.where(
        psi > 0,
        ratio * np.log1p(safe - quarter_f) + np.log1p(safe * ratio - quarter_f)
        - quarter_f / safe,
        0.0)
    return values if values.ndim else float(values)


def mp_stieltjes(z, ratio):
    '''
    Stieltjes transform of the mp law at ratio, the root of
        z S^2 + (z - r + 1) S + 1 = 0
    lying in the upper half plane.
    '''
    _check_ratio(ratio)
    z = np.asarray(z, dtype=complex)
    b = z - ratio + 1.0
    disc = np.sqrt(b * b - 4.0 * z)
    first = (-b + disc) / (2.0 * z)
    second = (-b - disc) / (2.0 * z)
    values = np.where(first.imag >= second.imag, first, second)
    return values if values.ndim else complex(values)


# ##############################################
# ----      M~_alpha/M = I + alpha_bar W      ---- #
# ##############################################

def m_alpha_support(beta, alpha_bar):
    if not alpha_bar > 0:
        raise DomainError("alpha_bar must be positive, got %r" % (alpha_bar, ))
    lower, upper = mp_support(beta)
    return 1.0 + alpha_bar * lower, 1.0 + alpha_bar * upper


def m_alpha_density(x, beta, alpha_bar):
    '''
    Continuous density of I + alpha_bar*W, W mp at ratio beta:
        sqrt((x - 1 - alpha_bar a)(1 + alpha_bar b - x)) / (2 pi alpha_bar (x-1))
    which equals mp_density((x-1)/alpha_bar, beta)/alpha_bar.
    '''
    lower, upper = m_alpha_support(beta, alpha_bar)
    x = np.asarray(x, dtype=float)
    inside = (x > lower) & (x < upper) & (x > 1.0)
    safe_x = np.where(inside, x, 2.0)
    values = np.where(
        inside,
        np.sqrt(np.clip((safe_x - lower) * (upper - safe_x), 0.0, None)) /
        (2.0 * np.pi * alpha_bar * (safe_x - 1.0)),
        0.0)
    return values if values.ndim else float(values)


def m_alpha_eta(psi, beta, alpha_bar):
    '''
    Closed form eta transform of I + alpha_bar*W:
        eta(psi) = eta_W(psi alpha_bar/(1+psi)) / (1+psi)
    '''
    psi = np.asarray(psi, dtype=float)
    return mp_eta(psi * alpha_bar / (1.0 + psi), beta) / (1.0 + psi)


# #####################################
# ----      Generic transforms      ---- #
# #####################################

def _edge_form_integral(form, fn):
    if fn is None:
        integrand = form.smooth
    else:
        integrand = lambda x: form.smooth(x) * fn(x)

    value, _ = integrate.quad(
        integrand, form.lower, form.upper, weight="alg",
        wvar=(form.lower_power, form.upper_power), limit=200)
    return value


def expectation(density, fn, renormalize=False):
    '''
    Returns the integral of fn against density, atoms included.

    Closed form densities are integrated by quad with their algebraic
    edge weight, sampled ones by the trapezoid rule on their grid.
    With renormalize=True the continuous part is rescaled so the total
    mass is exactly 1 before integrating.
    '''
    if density.edge_form is not None:
        continuous = _edge_form_integral(density.edge_form, fn)
    elif density.grid.size > 1:
        samples = fn(density.grid) * density.values
        continuous = float(integrate.trapezoid(samples, density.grid))
    else:
        continuous = 0.0

    if renormalize:
        mass = density.continuous_mass()
        wanted = 1.0 - density.atom_mass()
        if mass > 0 and wanted > 0:
            continuous *= wanted / mass

    total = continuous
    if density.atom_at_zero:
        total += density.atom_at_zero * float(fn(np.zeros(1))[0])
    for location, mass in density.extra_atoms:
        total += mass * float(fn(np.full(1, location))[0])
    return total


def eta_numeric(density, psi):
    '''
    eta transform atom + integral f(x)/(1 + psi x) dx of a density.
    '''
    if not psi >= 0:
        raise DomainError("psi must be non-negative, got %r" % (psi, ))
    if psi == 0:
        return 1.0
    return expectation(density, lambda x: 1.0 / (1.0 + psi * x))


def _quadratic_roots(a, b, c):
    # roots of a t^2 + b t + c without cancellation, complex safe
    disc = np.sqrt(np.asarray(b * b - 4.0 * a * c, dtype=complex))
    sign = np.where((np.conj(b) * disc).real >= 0, 1.0, -1.0)
    q = -0.5 * (b + sign * disc)
    q = np.where(q == 0, 1e-300, q)
    return q / a, c / q


def inverse_eta_m_alpha(x, beta, alpha_bar):
    '''
    Inverse eta transform of I + alpha_bar*W:
        (-x a - beta a + a - 1 + sqrt(D)) / (2 x a),  a = alpha_bar
        D = (a x + a beta - a + 1)^2 - 4 a (x - 1)
    Evaluated in a cancellation free form. x must lie in (0, 1).
    '''
    if not alpha_bar > 0:
        raise DomainError("alpha_bar must be positive, got %r" % (alpha_bar, ))
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0.0) | (x >= 1.0)):
        raise DomainError("eta values must lie in (0, 1), got %r" % (x, ))

    b = alpha_bar * x + alpha_bar * (beta - 1.0) + 1.0
    root = np.sqrt(b * b - 4.0 * alpha_bar * (x - 1.0))
    safe_b = np.where(b >= 0, b, 0.0)
    stable = 2.0 * (1.0 - x) / (x * (safe_b + root))
    direct = (root - b) / (2.0 * alpha_bar * x)
    values = np.where(b >= 0, stable, direct)
    return values if values.ndim else float(values)


def _inverse_eta_m_alpha_branches(x, beta, alpha_bar):
    # both roots of alpha_bar x psi^2 + b psi + (x-1)/x = 0 for complex x
    x = np.asarray(x, dtype=complex)
    if alpha_bar < ALPHA_BAR_FLOOR:
        single = (1.0 - x) / x
        return single, single
    b = alpha_bar * x + alpha_bar * (beta - 1.0) + 1.0
    return _quadratic_roots(alpha_bar * x, b, (x - 1.0) / x)


def s_transform_n2(x, gamma):
    '''S-transform 1/(gamma + x) of the second hop Gram matrix H2^H H2/M.'''
    x = np.asarray(x)
    denominator = gamma + x
    if np.any(denominator == 0):
        raise DomainError("S-transform pole at x = -gamma = %r" % (-gamma, ))
    values = 1.0 / denominator
    return values if values.ndim else values[()]


def inverse_eta_k_alpha(x, beta, gamma, alpha_bar):
    '''
    Inverse eta transform of K_alpha/M by free multiplicative convolution:
        eta_K^-1(x) = S_N2(x - 1) * eta_M^-1(x)
    alpha_bar below the floor is treated as M~ = I, eta_M^-1(x) = (1-x)/x.
    '''
    _check_non_negative("alpha_bar", alpha_bar)
    if alpha_bar < ALPHA_BAR_FLOOR:
        x = np.asarray(x, dtype=float)
        if np.any((x <= 0.0) | (x >= 1.0)):
            raise DomainError("eta values must lie in (0, 1), got %r" % (x, ))
        inner = (1.0 - x) / x
    else:
        inner = inverse_eta_m_alpha(x, beta, alpha_bar)
    return s_transform_n2(np.asarray(x) - 1.0, gamma) * inner


# ###################################################
# ----      Quartic Stieltjes equation of K      ---- #
# ###################################################

def quartic_coefficients(z, beta, gamma, alpha_bar):
    '''
    Coefficients (c4, c3, c2, c1, c0) of the quartic in S obtained by
    putting psi = eta_K^-1(-z S) into z psi + 1 = 0 and clearing the
    square root of the M~ inverse eta transform. With g = gamma - 1 and
    c = alpha_bar (beta - 1) + 1:
        c4 = alpha_bar z^2
        c3 = alpha_bar z (z - 2 g)
        c2 = alpha_bar g^2 - z (alpha_bar g + c)
        c1 = c g - z
        c0 = -1
    At alpha_bar = 0 this is the mp quadratic z S^2 + (z - gamma + 1) S + 1.
    Array z gives coefficients stacked along the last axis.
    '''
    _check_non_negative("alpha_bar", alpha_bar)
    z = np.asarray(z, dtype=complex)
    g = gamma - 1.0
    c = alpha_bar * (beta - 1.0) + 1.0
    return np.stack((
        alpha_bar * z * z,
        alpha_bar * z * (z - 2.0 * g),
        alpha_bar * g * g - z * (alpha_bar * g + c),
        c * g - z,
        np.full_like(z, -1.0),
        ), axis=-1)


def _polyval(coeffs, s):
    # Horner over the last axis of coeffs, broadcast against s
    value = np.zeros_like(s)
    for k in range(coeffs.shape[-1]):
        value = value * s + coeffs[..., k:k + 1]
    return value


def _polyder_val(coeffs, s):
    degree = coeffs.shape[-1] - 1
    value = np.zeros_like(s)
    for k in range(degree):
        value = value * s + (degree - k) * coeffs[..., k:k + 1]
    return value


def quartic_roots(coeffs, polish=NEWTON_POLISH_STEPS):
    '''
    All roots of the polynomials whose coefficients (highest power first)
    lie along the last axis of coeffs. Roots come from the eigenvalues of
    the companion matrices and are then polished by Newton steps that are
    kept only where they shrink |p|. Returns an array of shape (..., degree).
    A vanishing leading coefficient drops to the quadratic mp case.
    '''
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    lead = coeffs[..., 0]
    if np.all(lead == 0) and np.all(coeffs[..., 1] == 0):
        # alpha_bar == 0: quadratic padded with two infinite roots
        q1, q2 = _quadratic_roots(coeffs[..., 2], coeffs[..., 3],
                                  coeffs[..., 4])
        inf = np.full_like(q1, np.inf)
        return np.stack((q1, q2, inf, inf), axis=-1)

    degree = coeffs.shape[-1] - 1
    monic = coeffs[..., 1:] / lead[..., None]
    companion = np.zeros(coeffs.shape[:-1] + (degree, degree), dtype=complex)
    companion[..., 0, :] = -monic
    for i in range(1, degree):
        companion[..., i, i - 1] = 1.0
    roots = np.linalg.eigvals(companion)

    for _ in range(polish):
        value = _polyval(coeffs, roots)
        slope = _polyder_val(coeffs, roots)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(slope != 0, value / slope, 0.0)
        candidate = roots - step
        better = np.abs(_polyval(coeffs, candidate)) < np.abs(value)
        roots = np.where(better & np.isfinite(candidate), candidate, roots)
    return roots


def fixed_point_residual(z, S, beta, gamma, alpha_bar):
    '''
    |z eta_K^-1(-z S) + 1|, minimized over the two branches of the square
    root in the M~ inverse eta transform. Both branches survive clearing
    the root, so a coefficient error shows up here while a branch choice
    does not.
    '''
    z = np.asarray(z, dtype=complex)
    S = np.asarray(S, dtype=complex)
    x = -z * S
    with np.errstate(divide="ignore", invalid="ignore"):
        first, second = _inverse_eta_m_alpha_branches(x, beta, alpha_bar)
        sigma = 1.0 / (gamma + x - 1.0)
        residual = np.minimum(np.abs(z * sigma * first + 1.0),
                              np.abs(z * sigma * second + 1.0))
    residual = np.where(np.isfinite(residual), residual, np.inf)
    return residual if residual.ndim else float(residual)


def _upper_half_mask(z, roots):
    # Nevanlinna tests for a law on [0, inf): Im S >= 0 and Im(z S) >= 0
    z = np.asarray(z, dtype=complex)[..., None]
    size = np.abs(roots)
    tol = IMAG_SIGN_TOLERANCE * size
    finite = np.isfinite(roots)
    with np.errstate(invalid="ignore"):
        return (finite & (roots.imag > -tol) &
                ((z * roots).imag > -tol * np.abs(z)))


def _candidate_mask(z, roots, beta, gamma, alpha_bar):
    '''
    Roots that pass the upper half plane tests and, among those, the
    fixed point residual test. Rows where the residual test removes every
    upper half plane root keep all of them so the caller can report it.
    '''
    valid = _upper_half_mask(z, roots)
    residual = fixed_point_residual(
        np.asarray(z, dtype=complex)[..., None], roots, beta, gamma, alpha_bar)
    exact = valid & (residual <= ROOT_FILTER_TOLERANCE)
    return np.where(exact.any(axis=-1, keepdims=True), exact, valid)


def _asymptotic_guess(z, beta, gamma, alpha_bar):
    # S(z) ~ -1/z - m1/z^2 with first moment m1 = gamma (1 + alpha_bar beta)
    return -1.0 / z - gamma * (1.0 + alpha_bar * beta) / (z * z)


def _nearest(z, roots, candidates, target):
    if not candidates.any():
        raise NoValidRootError(z, roots)
    distance = np.where(candidates, np.abs(roots - target), np.inf)
    return int(np.argmin(distance))


def _cold_start(z, beta, gamma, alpha_bar):
    '''
    Follows the physical root from far above the real axis, where it is
    close to -1/z, straight down to z.
    '''
    lower, upper = k_alpha_bounds(beta, gamma, alpha_bar)
    top = 10.0 * max(abs(z.real), upper, 1.0)
    bottom = max(z.imag, 1e-300)
    heights = top * (bottom / top) ** np.linspace(0.0, 1.0, HOMOTOPY_STEPS)
    path = z.real + 1j * heights
    all_roots = quartic_roots(quartic_coefficients(path, beta, gamma, alpha_bar))
    candidates = _candidate_mask(path, all_roots, beta, gamma, alpha_bar)

    target = _asymptotic_guess(path[0], beta, gamma, alpha_bar)
    for point, roots, mask in zip(path, all_roots, candidates):
        target = roots[_nearest(point, roots, mask, target)]
    return target


def stieltjes_k_alpha(z, beta, gamma, alpha_bar, previous=None):
    '''
    Evaluates the Stieltjes transform of K_alpha/M at z (Im z > 0).

    Solves the quartic and keeps the roots passing the upper half plane
    tests and the fixed point residual test. Of those it takes the one
    closest to previous (a value at a nearby point). Without previous,
    the branch is found by continuation from large Im z. Raises
    NoValidRootError when no root qualifies or the chosen one fails the
    residual check.
    '''
    z = complex(z)
    if not z.imag > 0:
        raise DomainError("z must lie in the upper half plane, got %r" % (z, ))
    _check_non_negative("alpha_bar", alpha_bar)

    if alpha_bar < ALPHA_BAR_FLOOR:
        value = complex(mp_stieltjes(z, gamma))
        coeffs = quartic_coefficients(z, beta, gamma, 0.0)
        roots = quartic_roots(coeffs)[0]
        selected = int(np.argmin(np.abs(roots - value)))
        return StieltjesSample(z, roots, selected, value,
                               fixed_point_residual(z, value, beta, gamma, 0.0))

    if previous is None:
        previous = _cold_start(z, beta, gamma, alpha_bar)

    roots = quartic_roots(quartic_coefficients(z, beta, gamma, alpha_bar))[0]
    candidates = _candidate_mask(z, roots, beta, gamma, alpha_bar)
    selected = _nearest(z, roots, candidates, previous)
    value = complex(roots[selected])
    residual = fixed_point_residual(z, value, beta, gamma, alpha_bar)
    if residual > ROOT_RESIDUAL_TOLERANCE:
        raise NoValidRootError(
            z, roots, "selected root %r at z=%r has fixed point residual "
            "%.3g" % (value, z, residual))
    return StieltjesSample(z, roots, selected, value, residual)


def stieltjes_k_alpha_line(z, beta, gamma, alpha_bar, restarts=()):
    '''
    Evaluates the Stieltjes transform along an ordered array of points,
    choosing at each point the root continuing the previous one. The
    branch is found again by a cold start at index 0 and at every index
    in restarts. Returns (values, residuals).
    '''
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise DomainError("z must lie in the upper half plane")
    if alpha_bar < ALPHA_BAR_FLOOR:
        _check_non_negative("alpha_bar", alpha_bar)
        values = mp_stieltjes(z, gamma)
        return values, fixed_point_residual(z, values, beta, gamma, 0.0)

    all_roots = quartic_roots(quartic_coefficients(z, beta, gamma, alpha_bar))
    candidates = _candidate_mask(z, all_roots, beta, gamma, alpha_bar)

    starts = {0}
    starts.update(int(i) for i in restarts)
    values = np.empty(z.shape, dtype=complex)
    previous = None
    for i, roots in enumerate(all_roots):
        if i in starts:
            previous = _cold_start(z[i], beta, gamma, alpha_bar)
        previous = values[i] = roots[_nearest(z[i], roots, candidates[i], previous)]

    return values, fixed_point_residual(z, values, beta, gamma, alpha_bar)


# #####################################################
# ----      Asymptotic eigenvalue density of K      ---- #
# #####################################################

def k_alpha_bounds(beta, gamma, alpha_bar):
    '''
    Interval containing the continuous spectrum of K_alpha/M: products
    of the extreme points of the two factor laws.
    '''
    a_lower, a_upper = mp_support(gamma)
    b_lower, b_upper = mp_support(beta)
    if beta < 1.0:
        # atom of I + alpha_bar W at 1
        b_lower = 0.0
    return a_lower * (1.0 + alpha_bar * b_lower), a_upper * (1.0 + alpha_bar * b_upper)


def _support_of(grid, values):
    peak = values.max() if values.size else 0.0
    if not peak > 0:
        return (float(grid[0]), float(grid[-1]))
    inside = np.flatnonzero(values > SUPPORT_THRESHOLD * peak)
    return (float(grid[inside[0]]), float(grid[inside[-1]]))


def _zero_atom_lorentzian(grid, y_eps, gamma):
    # what the atom at zero leaves in Im S(x + i y)/pi
    return mp_atom(gamma) * y_eps / (np.pi * (grid**2 + y_eps**2))


def aepdf_bulks(beta, gamma, alpha_bar, points=BULK_SCAN_POINTS):
    '''
    Returns the disjoint (lower, upper) intervals holding the continuous
    spectrum of K_alpha/M, in ascending order.

    A coarse pass evaluates the density on a geometric grid over
    k_alpha_bounds at an offset proportional to x, so narrow bulks near
    the origin are seen as clearly as wide ones far from it. Runs where
    the mass per unit of ln x exceeds BULK_THRESHOLD of its peak become
    bulks, widened by BULK_PAD on a log scale and merged where they meet.
    For beta < 1 and large alpha_bar the spectrum splits in two: a bulk
    of mass 1 - beta near the mp support at ratio gamma, coming from the
    atom of I + alpha_bar W at 1, and one of mass beta around alpha_bar.
    '''
    _check_non_negative("alpha_bar", alpha_bar)
    lower, upper = k_alpha_bounds(beta, gamma, alpha_bar)
    stop = upper * (1.0 + BULK_PAD)
    start = max(lower / (1.0 + BULK_PAD), BULK_SCAN_RANGE * stop)
    scan = np.geomspace(start, stop, points)
    y_eps = BULK_SCAN_Y_FRACTION * scan

    values, _ = stieltjes_k_alpha_line(scan + 1j * y_eps, beta, gamma, alpha_bar)
    density = values.imag / np.pi - _zero_atom_lorentzian(scan, y_eps, gamma)
    weight = np.clip(density, 0.0, None) * scan
    peak = weight.max()
    if not peak > 0:
        return ((float(start), float(stop)), )

    inside = np.concatenate(([False], weight > BULK_THRESHOLD * peak, [False]))
    changes = np.diff(inside.astype(int))
    firsts = np.flatnonzero(changes == 1)
    lasts = np.flatnonzero(changes == -1) - 1

    bulks = []
    for first, last in zip(firsts, lasts):
        bulk_lower = scan[max(first - 1, 0)] / (1.0 + BULK_PAD)
        bulk_upper = scan[min(last + 1, points - 1)] * (1.0 + BULK_PAD)
        if bulks and bulk_lower <= bulks[-1][1]:
            bulks[-1] = (bulks[-1][0], float(bulk_upper))
        else:
            bulks.append((float(bulk_lower), float(bulk_upper)))

    logger.debug("K bulks for beta=%g gamma=%g alpha_bar=%g: %s",
                 beta, gamma, alpha_bar, bulks)
    return tuple(bulks)


def aepdf_grid(beta, gamma, alpha_bar, points=DENSITY_POINTS, bulks=None):
    '''
    Returns about points ascending abscissae covering the support of
    K_alpha/M. Every bulk from aepdf_bulks gets an equal share: half of it
    cosine spaced, clustering at the square root edges, half geometric,
    following mass piled up near the lower end of a wide bulk.
    '''
    if bulks is None:
        bulks = aepdf_bulks(beta, gamma, alpha_bar)
    share = max(points // len(bulks), MIN_BULK_POINTS)

    pieces = []
    for lower, upper in bulks:
        edges = _edge_clustered_grid(lower, upper, share // 2)
        inner = np.geomspace(lower, upper, share - share // 2 + 2)[1:-1]
        pieces.append(np.union1d(edges, inner))
    return np.concatenate(pieces)


def _bulk_starts(grid, bulks):
    # first grid index inside each bulk, where the root is followed afresh
    starts = np.searchsorted(grid, [lower for lower, _ in bulks])
    return tuple(int(i) for i in starts if 0 < i < grid.size)


def _local_y_eps(grid, bulks):
    scale = np.full(grid.shape, grid[-1] - grid[0])
    for lower, upper in bulks:
        scale[(grid >= lower) & (grid <= upper)] = upper - lower
    scale = np.where(grid > 0, np.minimum(scale, np.abs(grid)), scale)
    return Y_EPS_FRACTION * scale


def _density_on_line(grid, y_eps, beta, gamma, alpha_bar, restarts):
    values, residuals = stieltjes_k_alpha_line(
        grid + 1j * y_eps, beta, gamma, alpha_bar, restarts)
    density = values.imag / np.pi
    if mp_atom(gamma) > 0:
        density = density - _zero_atom_lorentzian(grid, y_eps, gamma)
    return np.clip(density, 0.0, None), residuals


def aepdf_k_alpha(grid, beta, gamma, alpha_bar, y_eps=None,
                  check_refinement=True, bulks=None):
    '''
    Asymptotic eigenvalue density of K_alpha/M on grid, from
        f(x) = Im S(x + i y_eps) / pi
    y_eps may be a scalar or one offset per grid point. It defaults to
    Y_EPS_FRACTION times the local support scale: the width of the bulk
    holding x, or x itself when that is smaller. The root is followed
    along the grid and picked up again by a cold start at the first point
    of every bulk. bulks defaults to aepdf_bulks(beta, gamma, alpha_bar).

    With check_refinement the density is recomputed at y_eps/2 and the
    largest change relative to the peak is kept as refinement_gap.
    alpha_bar below the floor gives the closed form mp law at ratio gamma.
    '''
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be 1-d, ascending, with 2+ points")
    _check_non_negative("alpha_bar", alpha_bar)
    if y_eps is not None and not np.all(np.asarray(y_eps) > 0):
        raise DomainError("y_eps must be positive, got %r" % (y_eps, ))

    if alpha_bar < ALPHA_BAR_FLOOR:
        closed = SpectralDensity.from_mp(gamma)
        return SpectralDensity(grid=grid, values=mp_density(grid, gamma),
                               support=closed.support,
                               atom_at_zero=closed.atom_at_zero,
                               edge_form=closed.edge_form)

    if bulks is None:
        bulks = aepdf_bulks(beta, gamma, alpha_bar)
    if y_eps is None:
        y_eps = _local_y_eps(grid, bulks)
    y_eps = np.broadcast_to(np.asarray(y_eps, dtype=float), grid.shape)
    restarts = _bulk_starts(grid, bulks)

    values, residuals = _density_on_line(
        grid, y_eps, beta, gamma, alpha_bar, restarts)

    gap = 0.0
    if check_refinement:
        halved, _ = _density_on_line(
            grid, 0.5 * y_eps, beta, gamma, alpha_bar, restarts)
        peak = values.max()
        gap = float(np.abs(values - halved).max() / peak) if peak > 0 else 0.0
        if gap > REFINEMENT_TOLERANCE:
            logger.warning("density of K at alpha_bar=%g changes by %.3g "
                           "between y_eps and y_eps/2", alpha_bar, gap)

    density = SpectralDensity(
        grid=grid, values=values, support=_support_of(grid, values),
        atom_at_zero=mp_atom(gamma), refinement_gap=gap,
        max_residual=float(np.max(residuals)))
    logger.debug("aepdf alpha_bar=%g: %d points, support=%s defect=%.3g "
                 "gap=%.3g residual=%.3g", alpha_bar, grid.size,
                 density.support, density.normalization_defect, gap,
                 density.max_residual)
    return density


def aepdf_density(beta, gamma, alpha_bar, points=DENSITY_POINTS, y_eps=None):
    '''
    Density of K_alpha/M as used by the capacity integrals: aepdf_k_alpha
    on the aepdf_grid of the detected bulks. While the mass defect
    exceeds MASS_TOLERANCE the grid is doubled, at most GRID_DOUBLINGS
    times. alpha_bar below the floor is the closed form mp law at ratio
    gamma.
    '''
    _check_non_negative("alpha_bar", alpha_bar)
    if alpha_bar < ALPHA_BAR_FLOOR:
        return SpectralDensity.from_mp(gamma, points)

    bulks = aepdf_bulks(beta, gamma, alpha_bar)
    for doubling in range(GRID_DOUBLINGS + 1):
        grid = aepdf_grid(beta, gamma, alpha_bar, points << doubling, bulks)
        density = aepdf_k_alpha(grid, beta, gamma, alpha_bar, y_eps,
                                bulks=bulks)
        if density.normalization_defect <= MASS_TOLERANCE:
            break
    else:
        logger.warning("density of K at alpha_bar=%g keeps a mass defect of "
                       "%.3g on %d points", alpha_bar,
                       density.normalization_defect, grid.size)
    return density
