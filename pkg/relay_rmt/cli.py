'''
Command line front end: single point evaluations, parameter sweeps,
sweep presets and density exports. Emits CSV or JSON for plotting.

Settings are layered, each source overriding the previous one:
    built-in defaults < --preset < --config FILE < explicit flags
'''
import argparse
import csv
import io
import json
import logging
import os
import sys
import time

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from relay_rmt import __version__
from relay_rmt.capacity import asymptotic_capacity, mc_ergodic_capacity
from relay_rmt.constants import DENSITY_POINTS, SWEEP_AXES, NU_MODES, UNITS,\
     FORMATS, SWEEP_COLUMNS, SEED_ENV_VAR, DEFAULT_SEED, EXIT_OK,\
     EXIT_VALIDATION, EXIT_NUMERICAL
from relay_rmt.exceptions import RelayRmtError, ConfigError, DomainError,\
     NumericalError
from relay_rmt.frozen_dict import FrozenDict
from relay_rmt.montecarlo import sample_eigenvalues, empirical_density
from relay_rmt.params import SystemConfig, validate_config,\
     derive_coefficients, distortion_covariances
from relay_rmt.util import db_to_linear, str_to_identifier, json_safe,\
     write_text_atomic

__all__ = ("PRESETS", "PRESET_ALIASES", "preset_name", "SweepSpec",
           "run_point", "run_sweep", "sweep_to_csv", "export_densities",
           "build_parser", "main")

logger = logging.getLogger(__name__)

DELTA_KEYS = ("delta_t1", "delta_r1", "delta_t2", "delta_r2")

# flat setting names accepted by --config files and presets
SETTING_KEYS = frozenset((
    "K", "M", "N", "mu_db", "nu_db", "delta", "nu_mode", "alpha",
    "mc_trials", "seed", "jobs", "format", "units", "points", "bins",
    "export_dir") + DELTA_KEYS)

DEFAULTS = FrozenDict(
    K=50, M=10, N=100, mu_db=20.0, nu_db=20.0, delta=0.0,
    nu_mode="direct", mc_trials=0, jobs=1, format="csv", units="nats",
    points=DENSITY_POINTS, bins=100,
    )

BASE_DIMS = dict(K=50, M=10, N=100, nu_db=20.0)
MU_SWEEP = dict(axis="mu_db", start=0.0, stop=50.0, steps=11)


def _mu_series_per_nu(delta):
    return tuple(dict(MU_SWEEP, series="nu_db=%d" % nu_db,
                      overrides=dict(nu_db=float(nu_db), delta=delta))
                 for nu_db in range(0, 60, 10))


def _dimension_series(delta):
    per_gamma = tuple(
        dict(axis="beta", start=1.0, stop=10.0, steps=10,
             series="gamma=%d" % gamma,
             overrides=dict(N=gamma * BASE_DIMS["M"], delta=delta))
        for gamma in (2, 5, 10))
    return per_gamma + (dict(axis="gamma", start=1.0, stop=10.0, steps=10,
                             series="beta=5",
                             overrides=dict(K=50, delta=delta)), )


PRESETS = FrozenDict({
    "fig1": dict(
        description="eigenvalue density of K_alpha/M against a histogram",
        settings=dict(BASE_DIMS, mu_db=20.0, delta=0.0, mc_trials=1000),
        sweeps=(), export=True),
    "fig2": dict(
        description="capacity versus mu for several impairment levels",
        settings=dict(BASE_DIMS, delta=0.0),
        sweeps=tuple(dict(MU_SWEEP, series="delta=%g" % delta,
                          overrides=dict(delta=delta))
                     for delta in (0.0, 0.01, 0.08, 0.15)),
        export=False),
    "fig3a": dict(
        description="capacity versus mu and nu without impairments",
        settings=dict(BASE_DIMS, delta=0.0),
        sweeps=_mu_series_per_nu(0.0), export=False),
    "fig3b": dict(
        description="capacity versus mu and nu with delta=0.08",
        settings=dict(BASE_DIMS, delta=0.08),
        sweeps=_mu_series_per_nu(0.08), export=False),
    "fig4a": dict(
        description="capacity versus beta and gamma without impairments",
        settings=dict(BASE_DIMS, mu_db=20.0, delta=0.0),
        sweeps=_dimension_series(0.0), export=False),
    "fig4b": dict(
        description="capacity versus beta and gamma with delta=0.08",
        settings=dict(BASE_DIMS, mu_db=20.0, delta=0.08),
        sweeps=_dimension_series(0.08), export=False),
    })

# descriptive names accepted by --preset in place of the figure names
PRESET_ALIASES = FrozenDict({
    "density": "fig1",
    "mu-sweep": "fig2",
    "mu-nu-ideal": "fig3a",
    "mu-nu-impaired": "fig3b",
    "dims-ideal": "fig4a",
    "dims-impaired": "fig4b",
    })


def preset_name(name):
    '''Maps a preset alias to its figure name. Other names pass through.'''
    return PRESET_ALIASES.get(name, name)


def config_from_settings(settings):
    '''
    Builds a SystemConfig from flat settings. dB values are converted to
    linear here and nowhere else. delta sets all four impairment levels
    and the individual delta_* settings override it.
    '''
    delta = settings.get("delta", 0.0)
    nu_mode = settings.get("nu_mode", "direct")
    nu = None
    # the alpha modes derive nu themselves
    if nu_mode == "direct" and "nu_db" in settings:
        nu = db_to_linear(settings["nu_db"])
    return SystemConfig(
        K=settings["K"], M=settings["M"], N=settings["N"],
        mu=db_to_linear(settings["mu_db"]), nu=nu,
        nu_mode=nu_mode, alpha=settings.get("alpha"),
        **{key: settings.get(key, delta) for key in DELTA_KEYS})


@dataclass(frozen=True)
class SweepSpec:
    '''
    One sweep of a single axis over steps points from start to stop,
    everything else held at fixed. mc_trials == 0 skips Monte Carlo.
    '''
    axis: str
    start: float
    stop: float
    steps: int
    fixed: SystemConfig = field(default_factory=SystemConfig)
    mc_trials: int = 0
    seed: int = DEFAULT_SEED
    series: str = ""

    def values(self):
        return np.linspace(self.start, self.stop, self.steps)

    def violations(self):
        violations = []
        if self.axis not in SWEEP_AXES:
            violations.append("sweep axis must be one of %s, got %r" % (
                ", ".join(SWEEP_AXES), self.axis))
        if not isinstance(self.steps, int) or self.steps < 2:
            violations.append("sweep steps must be at least 2, got %r" % (
                self.steps, ))
        if not self.start < self.stop:
            violations.append("sweep start must be below stop, got %r >= %r" % (
                self.start, self.stop))
        if self.axis in ("beta", "gamma", "delta") and self.start < 0:
            violations.append("sweep start must be non-negative on the %s "
                              "axis, got %r" % (self.axis, self.start))
        if self.axis == "nu_db" and self.fixed.nu_mode != "direct":
            violations.append("the nu_db axis needs nu_mode direct, %r derives "
                              "nu from alpha" % self.fixed.nu_mode)
        if self.mc_trials < 0:
            violations.append("mc_trials must be non-negative, got %r" % (
                self.mc_trials, ))
        violations.extend(validate_config(self.fixed))
        return violations

    def config_at(self, value):
        '''
        The baseline with the swept quantity set to value. beta and gamma
        keep M fixed and round K = beta*M or N = gamma*M to whole antennas.
        '''
        fixed = self.fixed
        if self.axis == "mu_db":
            return fixed.replace(mu=db_to_linear(value))
        elif self.axis == "nu_db":
            return fixed.replace(nu=db_to_linear(value))
        elif self.axis == "beta":
            return fixed.replace(K=max(1, int(round(value * fixed.M))))
        elif self.axis == "gamma":
            return fixed.replace(N=max(1, int(round(value * fixed.M))))
        return fixed.with_delta(float(value))


def run_point(cfg, mc_trials=0, seed=DEFAULT_SEED, jobs=1,
              points=DENSITY_POINTS, units="nats"):
    '''
    Evaluates one configuration. Returns a report dict with the config,
    its coefficients and distortion variances, the asymptotic result and,
    when mc_trials > 0, the Monte Carlo result with the agreement ratio
    c_asym/c_mc.
    '''
    violations = validate_config(cfg)
    if violations:
        raise ConfigError("invalid configuration", violations=violations)

    asym = asymptotic_capacity(cfg, points=points).in_units(units)
    report = {
        "config": cfg.to_dict(),
        "coefficients": derive_coefficients(cfg).to_dict(),
        "distortion": distortion_covariances(cfg).to_dict(),
        "asymptotic": asym.to_dict(),
        }
    if mc_trials > 0:
        mc = mc_ergodic_capacity(cfg, mc_trials, seed, jobs).in_units(units)
        report["montecarlo"] = mc.to_dict()
        report["agreement"] = asym.c / mc.c if mc.c else float("nan")
    return report


def _nan_row(spec, value):
    return dict(series=spec.series, axis=spec.axis, value=float(value),
                c_asym=float("nan"), c1=float("nan"), c2=float("nan"),
                c_mc=float("nan") if spec.mc_trials else None,
                ci=float("nan") if spec.mc_trials else None,
                defect=float("nan"))


def _sweep_row(spec, value, points, units):
    start = time.perf_counter()
    try:
        cfg = spec.config_at(value)
        asym = asymptotic_capacity(cfg, points=points).in_units(units)
        row = dict(series=spec.series, axis=spec.axis, value=float(value),
                   c_asym=asym.c, c1=asym.c1, c2=asym.c2, c_mc=None, ci=None,
                   defect=asym.quadrature_defect)
        if spec.mc_trials:
            mc = mc_ergodic_capacity(cfg, spec.mc_trials, spec.seed).in_units(units)
            row.update(c_mc=mc.c, ci=mc.ci_halfwidth)
    except (RelayRmtError, ArithmeticError, ValueError) as exc:
        logger.warning("sweep point %s=%g failed: %s", spec.axis, value, exc)
        return _nan_row(spec, value)

    logger.debug("sweep point %s=%g done in %.2fs", spec.axis, value,
                 time.perf_counter() - start)
    return row


def run_sweep(spec, jobs=1, points=DENSITY_POINTS, units="nats"):
    '''
    Evaluates every point of spec, up to jobs at a time. Rows come back
    in axis order. A failing point becomes a row of NaNs and the sweep
    carries on.
    '''
    violations = spec.violations()
    if violations:
        raise ConfigError("invalid sweep", violations=violations)

    values = spec.values()
    run = lambda value: _sweep_row(spec, value, points, units)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(run, values))
    return [run(value) for value in values]


def _format_cell(value):
    if value is None:
        return ""
    elif isinstance(value, float):
        return "%.12g" % value
    return str(value)


def sweep_to_csv(rows):
    '''CSV text with the SWEEP_COLUMNS header and one line per row.'''
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(row[column]) for column in SWEEP_COLUMNS])
    return buffer.getvalue()


def export_densities(cfg, export_dir, trials, seed=DEFAULT_SEED, jobs=1,
                     points=DENSITY_POINTS, bins=100):
    '''
    Writes the densities of both capacity terms and a histogram of the
    first term's Monte Carlo eigenvalues into export_dir. Returns the
    paths written.
    '''
    export_dir = Path(export_dir)
    coeffs = derive_coefficients(cfg)
    _, densities = asymptotic_capacity(cfg, points=points, return_densities=True)

    paths = []
    for name, density in zip(("density_c1.csv", "density_c2.csv"), densities):
        paths.append(export_dir / name)
        write_text_atomic(paths[-1], density.to_csv())

    if trials > 0:
        samples = sample_eigenvalues(cfg.dims, coeffs.alpha_bar_c1, trials,
                                     seed, jobs=jobs)
        paths.append(export_dir / "histogram_c1.csv")
        write_text_atomic(paths[-1], empirical_density(samples, bins).to_csv())
        paths.append(export_dir / "eigenvalues_c1.csv")
        write_text_atomic(paths[-1], samples.to_csv())

    for path in paths:
        logger.info("wrote %s", path)
    return paths


def build_parser():
    parser = argparse.ArgumentParser(
        prog="relay-rmt",
        description="Asymptotic and Monte Carlo ergodic capacity of dual-hop "
                    "amplify-and-forward MIMO relays with transceiver "
                    "impairments.")
    parser.add_argument("--version", action="version",
                        version="%(prog)s " + ".".join(map(str, __version__)))
    parser.add_argument("--preset", type=preset_name, choices=sorted(PRESETS),
                        help="figure preset; the aliases %s are also "
                             "accepted" % ", ".join(sorted(PRESET_ALIASES)))
    parser.add_argument("--config", metavar="FILE",
                        help="flat TOML file whose keys mirror the long flags")

    system = parser.add_argument_group("system")
    system.add_argument("--K", type=int)
    system.add_argument("--M", type=int)
    system.add_argument("--N", type=int)
    system.add_argument("--mu-db", type=float)
    system.add_argument("--nu-db", type=float)
    system.add_argument("--nu-mode", choices=NU_MODES)
    system.add_argument("--alpha", type=float,
                        help="relay power budget, linear (alpha nu modes)")
    system.add_argument("--delta", type=float,
                        help="sets all four impairment levels")
    for key in DELTA_KEYS:
        system.add_argument("--" + key.replace("_", "-"), type=float)

    run = parser.add_argument_group("run")
    run.add_argument("--sweep", nargs=4, metavar=("AXIS", "START", "STOP", "STEPS"))
    run.add_argument("--mc-trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int)
    run.add_argument("--points", type=int, help="density grid size")
    run.add_argument("--bins", type=int, help="histogram bins for exports")

    output = parser.add_argument_group("output")
    output.add_argument("--out", metavar="PATH")
    output.add_argument("--format", choices=FORMATS)
    output.add_argument("--units", choices=UNITS)
    output.add_argument("--export-dir", metavar="DIR")
    output.add_argument("-v", "--verbose", action="count", default=0)
    output.add_argument("-q", "--quiet", action="store_true")
    return parser


def load_config_file(path):
    '''
    Reads a flat TOML file into a dict of settings. Keys may use dashes
    or underscores. Unknown keys and nested tables are violations.
    '''
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("cannot read config file %s" % path,
                          violations=[str(exc)]) from exc

    settings, violations = {}, []
    for key, value in data.items():
        name = str_to_identifier(key)
        if name not in SETTING_KEYS:
            violations.append("unknown config key %r" % key)
        elif isinstance(value, dict):
            violations.append("config key %r must not be a table" % key)
        else:
            settings[name] = value
    if violations:
        raise ConfigError("invalid config file %s" % path, violations=violations)
    return settings


def _flag_settings(args):
    settings = {key: getattr(args, key, None) for key in SETTING_KEYS}
    return {key: value for key, value in settings.items() if value is not None}


def _resolve_seed(settings):
    if settings.get("seed") is not None:
        return settings["seed"]
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is None:
        return DEFAULT_SEED
    try:
        return int(env_seed)
    except ValueError:
        raise ConfigError("invalid seed", violations=[
            "%s must be an integer, got %r" % (SEED_ENV_VAR, env_seed)])


def resolve_settings(args):
    '''Layers defaults, preset, config file and flags into one FrozenDict.'''
    settings = DEFAULTS
    if args.preset:
        settings = settings.copyadd(PRESETS[args.preset]["settings"])
    if args.config:
        settings = settings.copyadd(load_config_file(args.config))
    settings = settings.copyadd(_flag_settings(args))
    return settings.copyadd(seed=_resolve_seed(settings))


def _parse_sweep(raw):
    axis, start, stop, steps = raw
    axis = str_to_identifier(axis.lower())
    try:
        return axis, float(start), float(stop), int(steps)
    except ValueError:
        raise ConfigError("invalid --sweep", violations=[
            "sweep START and STOP must be numbers and STEPS an integer, "
            "got %s" % " ".join(raw)])


def build_sweeps(args, settings):
    '''The SweepSpecs requested by --sweep or by the preset, in order.'''
    common = dict(mc_trials=settings["mc_trials"], seed=settings["seed"])
    if args.sweep:
        axis, start, stop, steps = _parse_sweep(args.sweep)
        return [SweepSpec(axis, start, stop, steps,
                          fixed=config_from_settings(settings), **common)]
    if not args.preset:
        return []

    specs = []
    for sweep in PRESETS[args.preset]["sweeps"]:
        # explicit flags still win over the per-series overrides
        layered = settings.copyadd(sweep["overrides"]).copyadd(
            _flag_settings(args))
        specs.append(SweepSpec(sweep["axis"], sweep["start"], sweep["stop"],
                               sweep["steps"],
                               fixed=config_from_settings(layered),
                               series=sweep["series"], **common))
    return specs


def _point_row(report):
    asym, mc = report["asymptotic"], report.get("montecarlo")
    return dict(series="", axis="point", value=float("nan"),
                c_asym=asym["c"], c1=asym["c1"], c2=asym["c2"],
                c_mc=mc["c"] if mc else None,
                ci=mc["ci_halfwidth"] if mc else None,
                defect=asym["quadrature_defect"])


def execute(args):
    '''Runs what args ask for and returns the output text.'''
    settings = resolve_settings(args)
    cfg = config_from_settings(settings)
    violations = validate_config(cfg)
    if violations:
        raise ConfigError("invalid configuration", violations=violations)

    jobs, units = settings["jobs"], settings["units"]
    points = settings["points"]
    run_violations = []
    if jobs < 1:
        run_violations.append("jobs must be at least 1, got %r" % jobs)
    if points < 16:
        run_violations.append("points must be at least 16, got %r" % points)
    if settings["mc_trials"] < 0:
        run_violations.append("mc_trials must be non-negative, got %r"
                              % settings["mc_trials"])
    if run_violations:
        raise ConfigError("invalid run settings", violations=run_violations)

    specs = build_sweeps(args, settings)
    if specs:
        logger.info("running %d sweep(s) with seed %d", len(specs), settings["seed"])
        rows = []
        for spec in specs:
            rows.extend(run_sweep(spec, jobs=jobs, points=points, units=units))
        if settings["format"] == "json":
            return json.dumps(json_safe(rows), indent=2) + "\n"
        return sweep_to_csv(rows)

    report = run_point(cfg, settings["mc_trials"], settings["seed"], jobs,
                       points, units)
    export = args.preset and PRESETS[args.preset]["export"]
    if export or settings.get("export_dir"):
        report["exports"] = [str(path) for path in export_densities(
            cfg, settings.get("export_dir", "."), settings["mc_trials"],
            settings["seed"], jobs, points, settings["bins"])]

    if settings["format"] == "json":
        return json.dumps(json_safe(report), indent=2) + "\n"
    return sweep_to_csv([_point_row(report)])


def _configure_logging(args):
    if args.quiet:
        level = logging.ERROR
    else:
        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)

    try:
        text = execute(args)
        if args.out:
            write_text_atomic(args.out, text)
        else:
            sys.stdout.write(text)
    except (ConfigError, DomainError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_VALIDATION
    except NumericalError as exc:
        sys.stderr.write("numerical failure: %s\n" % exc)
        return EXIT_NUMERICAL
    return EXIT_OK
