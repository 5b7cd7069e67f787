"""Command-line front end writing convergence, bound and solution data as CSV.

Subcommands
-----------
convergence
    Relative spectral error of ``R_k(L)`` against ``L**beta`` versus ``k``.
bound
    Pole distance, ellipse radius, a-priori bound versus measured error,
    ``epsilon_k`` and automatic ``k`` selection.
solve
    Run an example with the rational and/or matrix transfer path and
    write per-snapshot error curves and final profiles.

Exit status is 0 on success, 2 on usage errors and 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import statistics
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericalError
from .integrator import StepperConfig, ThetaIntegrator, step_by_step_difference
from .operators import laplacian_1d, laplacian_2d
from .problems import discretize, get_example, mt_system, rational_system
from .rational import (
    KSelectionWarning,
    build_coeffs,
    convergence_factor,
    ellipse_radius,
    epsilon_k,
    error_bound,
    eval_scalar,
    pole_distance,
    remark_estimate,
    select_k,
    tau_opt,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
TOLERANCE_LADDER = (1e-2, 1e-4, 1e-6, 1e-8, 1e-10)
REMARK_SIZES = (100, 200, 400)

# key = value configuration entries accepted by ``solve`` (flags override)
SOLVE_KEYS = {
    "example": int, "alpha": float, "kappa": float, "N": int, "k": str,
    "t_end": float, "scheme": str, "rel_tol": float, "out": str, "mode": str,
    "snapshots": int, "repeats": int,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# output helpers


def _format(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _csv_text(comment, header, rows):
    buf = io.StringIO()
    buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_format(v) for v in row])
    return buf.getvalue()


def _echo(command, settings):
    parts = [f"{k}={_format(v)}" for k, v in settings.items()]
    return f"fraclap {command} " + " ".join(parts)


def _emit(out, name, text, stream):
    """Write ``text`` to ``out/name`` or, without ``out``, to ``stream``."""
    if out is None:
        stream.write(f"## {name}\n{text}\n")
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    target = path / name
    target.write_text(text)
    return target


def _parse_floats(text):
    try:
        return [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_ints(text):
    vals = _parse_floats(text)
    if any(v != int(v) for v in vals):
        raise UsageError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _operator(dimension, N, length=1.0):
    if dimension == 1:
        return laplacian_1d(N, length)
    if dimension == 2:
        return laplacian_2d(N)
    raise UsageError(f"dimension must be 1 or 2, got {dimension}")


def _check_alpha(alpha):
    if not 1.0 < alpha < 2.0:
        raise UsageError(f"alpha must lie in (1, 2), got {alpha}")


# --------------------------------------------------------------------------
# convergence


def convergence_rows(dimension, N, alphas, k_max):
    """Rows ``(alpha, k, relative_error, theorem_bound, convergence_factor_power)``.

    The bound is divided by ``lambda_max**beta`` so that it is on the same
    relative scale as the measured error.
    """
    L = _operator(dimension, N)
    lam = L.eigenvalues()
    tau = tau_opt(L.lambda_min, L.lambda_max)
    kappa = L.condition_number
    cf = convergence_factor(kappa)
    rows = []
    for alpha in alphas:
        _check_alpha(alpha)
        beta = alpha / 2.0
        ref = lam ** beta
        scale = float(np.max(ref))
        for k in range(1, k_max + 1):
            R = build_coeffs(k, beta, tau)
            err = float(np.max(np.abs(ref - eval_scalar(R, lam)))) / scale
            bound = error_bound(k, beta, kappa, L.lambda_max, tau) / scale
            rows.append((alpha, k, err, bound, cf ** k))
    return rows


def cmd_convergence(args, stream):
    if args.k_max < 1 or args.N < 2:
        raise UsageError("k-max must be >= 1 and N >= 2")
    alphas = _parse_floats(args.alphas)
    settings = {"dimension": args.dimension, "N": args.N,
                "alphas": ",".join(_format(a) for a in alphas), "k_max": args.k_max}
    if args.dimension == 2:
        settings["unknowns"] = args.N ** 2
    rows = convergence_rows(args.dimension, args.N, alphas, args.k_max)
    text = _csv_text(
        _echo("convergence", settings),
        ["alpha", "k", "relative_error", "theorem_bound", "convergence_factor_power"],
        rows,
    )
    _emit(args.out, "convergence.csv", text, stream)
    return EXIT_OK


# --------------------------------------------------------------------------
# bound


def bound_tables(dimension, N, alpha, k_max):
    """The bound report as a dict of ``name -> (header, rows)``."""
    _check_alpha(alpha)
    beta = alpha / 2.0
    L = _operator(dimension, N)
    lam = L.eigenvalues()
    kappa = L.condition_number
    tau = tau_opt(L.lambda_min, L.lambda_max)
    g = pole_distance(kappa)
    rho = ellipse_radius(kappa)
    cf = convergence_factor(kappa)
    summary = [(kappa, tau, g, rho, cf, rho ** -2)]

    per_k = []
    for k in range(1, k_max + 1):
        R = build_coeffs(k, beta, tau)
        measured = float(np.max(np.abs(lam ** beta - eval_scalar(R, lam))))
        bound = error_bound(k, beta, kappa, L.lambda_max, tau)
        per_k.append((k, bound, measured, int(measured <= bound),
                      epsilon_k(R, L.lambda_min, beta)))

    selection = []
    for tol in TOLERANCE_LADDER:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", KSelectionWarning)
            k = select_k(L, beta, tol, k_max=max(k_max, 64))
        selection.append((tol, k, int(not caught)))

    remark = []
    for n in REMARK_SIZES:
        kap = laplacian_1d(n).condition_number
        direct = ((kap ** 0.25 + 1.0) / (kap ** 0.25 - 1.0)) ** 2
        remark.append((n, kap, remark_estimate(n), direct, 1.0 / convergence_factor(kap)))

    return {
        "bound_summary.csv": (
            ["kappa", "tau_opt", "gamma", "rho_M", "convergence_factor", "rho_M_inv_sq"],
            summary),
        "bound_per_k.csv": (
            ["k", "theorem_bound", "measured_error", "measured_le_bound", "epsilon_k"],
            per_k),
        "bound_select_k.csv": (["tolerance", "k", "reached"], selection),
        "bound_remark.csv": (
            ["N", "kappa", "estimate_1_plus_2pi_over_N", "direct_rho_M_sq",
             "inverse_convergence_factor"],
            remark),
    }


def cmd_bound(args, stream):
    if args.k_max < 1 or args.N < 2:
        raise UsageError("k-max must be >= 1 and N >= 2")
    settings = {"dimension": args.dimension, "N": args.N, "alpha": args.alpha,
                "k_max": args.k_max}
    echo = _echo("bound", settings)
    for name, (header, rows) in bound_tables(args.dimension, args.N, args.alpha,
                                             args.k_max).items():
        _emit(args.out, name, _csv_text(echo, header, rows), stream)
    return EXIT_OK


# --------------------------------------------------------------------------
# solve


@dataclass
class RunReport:
    """Summary of one ``solve`` invocation.

    ``errors`` maps curve names to per-snapshot max-norm errors;
    ``timings`` holds median wall-clock seconds of the integrate call.
    """

    config: dict
    times: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    selected_k: int | None = None
    epsilon_k: float | None = None
    stats: dict = field(default_factory=dict)

    def lines(self):
        out = [f"config: {_echo('solve', self.config)}"]
        for name, errs in self.errors.items():
            out.append(f"final {name}: {errs[-1]:.6e} (max {max(errs):.6e})")
        for name, secs in self.timings.items():
            out.append(f"time {name}: {secs:.3f} s")
        if "mt" in self.timings:
            for name, secs in self.timings.items():
                if name != "mt" and secs > 0:
                    out.append(f"time ratio mt/{name}: {self.timings['mt'] / secs:.2f}")
        if self.selected_k is not None:
            out.append(f"select_k(1e-6): {self.selected_k}")
        if self.epsilon_k is not None:
            out.append(f"epsilon_k: {self.epsilon_k:.6e}")
        return out


def read_config(path):
    """Parse a ``key = value`` file; keys are those of the solve flags.

    A CSV written by ``solve`` is accepted too: its echo comment line
    reproduces the run.
    """
    text = Path(path).read_text()
    first = text.lstrip().split("\n", 1)[0]
    if first.startswith("# fraclap solve "):
        text = "\n".join(first[len("# fraclap solve "):].split())
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[fraclap]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    out = {}
    for key, raw in parser["fraclap"].items():
        key = key.replace("-", "_")
        if key not in SOLVE_KEYS:
            raise UsageError(f"unknown configuration key {key!r} in {path}")
        try:
            out[key] = SOLVE_KEYS[key](raw)
        except ValueError:
            raise UsageError(f"bad value for {key}: {raw!r}") from None
    return out


def resolve_solve_settings(args):
    """Merge defaults, the configuration file and flags (flags win)."""
    settings = read_config(args.config) if args.config else {}
    for key in SOLVE_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    if "example" not in settings:
        raise UsageError("an example (1-4) is required")
    example = settings["example"]
    if example not in (1, 2, 3, 4):
        raise UsageError(f"unknown example {example}; choose from 1-4")
    problem = get_example(example)
    d = problem.defaults
    settings.setdefault("alpha", problem.alpha)
    settings.setdefault("kappa", problem.kappa)
    settings.setdefault("N", d["N"])
    settings.setdefault("k", ",".join(str(k) for k in d.get("ks", (d["k"],))))
    settings.setdefault("t_end", d["t_end"])
    settings.setdefault("scheme", "theta")
    settings.setdefault("rel_tol", 1e-6)
    settings.setdefault("mode", "both")
    settings.setdefault("snapshots", 20)
    settings.setdefault("repeats", 3)
    settings["k"] = ",".join(str(k) for k in _parse_ints(settings["k"]))
    if settings["mode"] not in ("rational", "mt", "both"):
        raise UsageError(f"mode must be rational, mt or both, got {settings['mode']!r}")
    if settings["scheme"] not in ("theta", "theta1"):
        raise UsageError(f"scheme must be theta or theta1, got {settings['scheme']!r}")
    if settings["t_end"] <= 0 or settings["snapshots"] < 1 or settings["repeats"] < 1:
        raise UsageError("t_end, snapshots and repeats must be positive")
    _check_alpha(settings["alpha"])
    # fixed key order keeps the echo line independent of flag order
    return {key: settings[key] for key in SOLVE_KEYS if key in settings}


def run_solve(settings, out=None, stream=sys.stdout):
    """Run the configured example; returns a :class:`RunReport`."""
    problem = get_example(settings["example"], settings["alpha"], settings["kappa"])
    disc = discretize(problem, settings["N"])
    ks = _parse_ints(settings["k"])
    if any(k < 1 for k in ks):
        raise UsageError("k must be positive")
    config = StepperConfig(scheme=settings["scheme"], rel_tol=settings["rel_tol"])
    t_end = settings["t_end"]
    snaps = t_end * np.arange(1, settings["snapshots"] + 1) / settings["snapshots"]
    snaps[-1] = t_end  # guard against rounding past the end time

    systems = {}
    if settings["mode"] in ("rational", "both"):
        for k in ks:
            systems[f"rational_k{k}"] = rational_system(disc, k)
    if settings["mode"] in ("mt", "both"):
        systems["mt"] = mt_system(disc)

    trajectories, timings, stats = {}, {}, {}
    for name, system in systems.items():
        elapsed = []
        for _ in range(settings["repeats"]):
            integrator = ThetaIntegrator(system, config)
            start = time.perf_counter()
            traj = integrator.integrate(t_end, snaps)
            elapsed.append(time.perf_counter() - start)
        trajectories[name] = traj
        timings[name] = statistics.median(elapsed)
        stats[name] = traj.stats

    errors = {}
    has_exact = problem.exact is not None
    if has_exact:
        exact = np.array([disc.exact_vector(t) for t in snaps])
        for name, traj in trajectories.items():
            errors[f"{name}_vs_exact"] = np.max(np.abs(traj.states - exact), axis=1).tolist()
    if "mt" in trajectories:
        for name, traj in trajectories.items():
            if name != "mt":
                diff = step_by_step_difference(traj, trajectories["mt"])
                errors[f"{name}_vs_mt"] = [e for _, e in diff]
    for name, errs in errors.items():
        if not all(math.isfinite(e) and e >= 0 for e in errs):
            raise NumericalError(f"non-finite error in {name}")

    L = disc.laplacian
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", KSelectionWarning)
        k_sel = select_k(L, problem.beta, 1e-6)
    eps = epsilon_k(build_coeffs(ks[-1], problem.beta, tau_opt(L.lambda_min, L.lambda_max)),
                    L.lambda_min)
    report = RunReport(settings, snaps.tolist(), errors, timings, k_sel, eps, stats)

    echo = _echo("solve", settings)
    names = list(errors)
    rows = [[t] + [errors[n][i] for n in names] for i, t in enumerate(snaps)]
    _emit(out, "errors.csv", _csv_text(echo, ["t"] + names, rows), stream)

    if problem.dimension == 1:
        coords, coord_names = [disc.mesh], ["x"]
    else:
        coords = [disc.mesh[0].ravel(), disc.mesh[1].ravel()]
        coord_names = ["x", "y"]
    cols, col_names = list(coords), list(coord_names)
    if has_exact:
        cols.append(disc.exact_vector(t_end))
        col_names.append("exact")
    for name, traj in trajectories.items():
        cols.append(traj.states[-1])
        col_names.append(name)
    profile = _csv_text(f"{echo} t={_format(t_end)}", col_names, zip(*cols))
    _emit(out, "profile.csv", profile, stream)
    return report


def cmd_solve(args, stream):
    settings = resolve_solve_settings(args)
    out = settings.pop("out", None)
    report = run_solve(settings, out, stream)
    # timings vary run to run, so they go to stderr rather than the CSV files
    for line in report.lines():
        print(line, file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser():
    parser = _Parser(prog="fraclap", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    conv = sub.add_parser("convergence", help="rational approximation error versus k")
    conv.add_argument("--dimension", type=int, default=1, choices=(1, 2))
    conv.add_argument("--N", type=int, default=200, help="interior points per direction")
    conv.add_argument("--alphas", default="1.2,1.5,1.8")
    conv.add_argument("--k-max", type=int, default=20)
    conv.add_argument("--out", help="output directory (default: stdout)")
    conv.set_defaults(func=cmd_convergence)

    bnd = sub.add_parser("bound", help="a-priori bound, epsilon_k and k selection")
    bnd.add_argument("--dimension", type=int, default=1, choices=(1, 2))
    bnd.add_argument("--N", type=int, default=200)
    bnd.add_argument("--alpha", type=float, default=1.5)
    bnd.add_argument("--k-max", type=int, default=20)
    bnd.add_argument("--out", help="output directory (default: stdout)")
    bnd.set_defaults(func=cmd_bound)

    sol = sub.add_parser("solve", help="run an example with the rational and/or MT path")
    sol.add_argument("--config", help="key = value file; flags override its entries")
    sol.add_argument("--example", type=int)
    sol.add_argument("--alpha", type=float)
    sol.add_argument("--kappa", type=float)
    sol.add_argument("--N", type=int)
    sol.add_argument("--k", help="quadrature points, comma-separated for a sweep")
    sol.add_argument("--t-end", dest="t_end", type=float)
    sol.add_argument("--scheme", choices=("theta", "theta1"))
    sol.add_argument("--rel-tol", dest="rel_tol", type=float)
    sol.add_argument("--mode", choices=("rational", "mt", "both"))
    sol.add_argument("--snapshots", type=int, help="number of equally spaced snapshots")
    sol.add_argument("--repeats", type=int, help="timing repetitions (median reported)")
    sol.add_argument("--out", help="output directory (default: stdout)")
    sol.set_defaults(func=cmd_solve)
    return parser


def main(argv=None, stream=None):
    stream = sys.stdout if stream is None else stream
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, stream)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
