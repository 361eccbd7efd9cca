'''
This module contains the numerical tolerances, grid sizes, output
column layouts and process-level constants shared by every module.
'''

from math import log

# ###############################################
# ----      Spectral density constants      ---- #
# ###############################################

DENSITY_POINTS = 2048  # number of abscissae in a sampled density grid.
MIN_BULK_POINTS = 16  # smallest share of the grid given to one bulk.
GRID_DOUBLINGS = 2  # times a grid may be doubled to meet MASS_TOLERANCE.
SUPPORT_THRESHOLD = 1e-4  # a grid point belongs to the support when its
#                           density exceeds this fraction of the peak.
Y_EPS_FRACTION = 1e-4  # Stieltjes inversion offset as a fraction of the
#                        local support scale.
REFINEMENT_TOLERANCE = 5e-2  # largest relative gap tolerated between the
#                              densities at y_eps and y_eps/2.
MASS_TOLERANCE = 1e-3  # atom + integral must be within this of 1.
MASS_REJECT_TOLERANCE = 1e-2  # defects up to this are renormalized with a
#                               NormalizationWarning, larger ones rejected.
OUTSIDE_SUPPORT_TOLERANCE = 1e-6

# coarse scan locating the bulks of a spectrum
BULK_SCAN_POINTS = 4096  # geometric scan grid size
BULK_SCAN_Y_FRACTION = 1e-4  # scan offset as a fraction of x
BULK_SCAN_RANGE = 1e-9  # scan never starts below this fraction of its end
BULK_THRESHOLD = 1e-3  # of the peak mass per unit ln x
BULK_PAD = 0.02  # relative widening of each bulk on both sides

# below this the M~_alpha branch degenerates to a point mass at 1
ALPHA_BAR_FLOOR = 1e-10

# ###########################################
# ----      Stieltjes root finding      ---- #
# ###########################################

ROOT_RESIDUAL_TOLERANCE = 1e-8
ROOT_FILTER_TOLERANCE = 1e-4  # looser cut used only to discard badly wrong roots
NEWTON_POLISH_STEPS = 3
HOMOTOPY_STEPS = 48  # geometric steps in Im z used to reach y_eps from
#                      far above the real axis on a cold start.
IMAG_SIGN_TOLERANCE = 1e-9  # relative; roots with Im S above -tol*|S|
#                              count as upper half plane.

# ####################################
# ----      Monte Carlo setup      ---- #
# ####################################

CI_Z = 1.96  # 95% two sided normal quantile
HISTOGRAM_EXTEND = 0.05  # histogram range widened by this fraction per side
JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 64
EIGEN_CLAMP = 1e-10  # eigenvalues above -EIGEN_CLAMP*scale are clamped to 0

# ###################################
# ----      Units and output      ---- #
# ###################################

LN2 = log(2.0)
UNITS = ("nats", "bits")
FORMATS = ("csv", "json")

SWEEP_AXES = ("mu_db", "nu_db", "beta", "gamma", "delta")
NU_MODES = ("direct", "from-alpha", "from-alpha-ideal")

# column order of sweep CSV rows. Documented in docs/output_formats.txt
SWEEP_COLUMNS = ("series", "axis", "value", "c_asym", "c1", "c2",
                 "c_mc", "ci", "defect")
DENSITY_COLUMNS = ("x", "density")
EIGEN_COLUMNS = ("trial", "eigenvalue")

# ##################################
# ----      Process level      ---- #
# ##################################

SEED_ENV_VAR = "RELAY_RMT_SEED"
DEFAULT_SEED = 0

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
