"""Command-line front end.

Subcommands reproduce the reference figure datasets as CSV, run sweeps on
preset or file-defined models, and run the validation suite.  Time is
reported in units of the inverse base rate; outputs are byte-identical for
identical configuration and seed (fixed-step integration, 12 significant
digits, newline-terminated rows).

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numeric-invariant breach.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, models
from .evolve import (
    TimeGrid,
    coherent_weight_series,
    depolarizing_weight,
    solve_channel_coefficients,
    stationary_populations_vector,
    trace_distance_factor,
)
from .qcore import (
    InvariantViolation,
    NumericalDriftError,
    basis_ket,
    projector,
    random_density_matrix,
)
from .witness import (
    REVIVAL_TOL,
    MeasurementSpec,
    cpf_correlation,
    cpf_equal_times,
    cpf_grid,
    cpf_joint_deterministic,
    random_measurement,
    random_policy,
    reference_measurements,
    trace_distance_bound,
    trace_distance_series,
)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _write_csv(out_path, meta: dict, header: list, rows) -> None:
    buf = io.StringIO()
    echo = " ".join(f"{k}={v}" for k, v in meta.items())
    buf.write(f"# qflow {__version__} {echo}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    data = buf.getvalue()
    if out_path in (None, "-"):
        sys.stdout.write(data)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)


def _float_list(text: str):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _jobs_from(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("QFLOW_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvariantViolation(f"QFLOW_JOBS={env!r} is not an integer")
    return 1


def _map_ordered(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _meta(args, command: str, **extra) -> dict:
    meta = {"command": command}
    meta.update(extra)
    meta["seed"] = args.seed
    return meta


def _resolve_model(args):
    if getattr(args, "model", None):
        return models.load_model(args.model)
    return models.DepolarizingModel(gamma=args.gamma, phi=args.phi,
                                    omega=args.omega)


def _preset_pair(ds: int):
    up = projector(basis_ket(ds, 0))
    down = projector(basis_ket(ds, 1))
    return up, down


def _preset_measurements(ds: int):
    if ds == 2:
        return reference_measurements()
    vecs = np.eye(ds, dtype=complex)
    spec = MeasurementSpec(vectors=vecs, outcomes=ds - 1 - 2 * np.arange(ds))
    ket = np.ones(ds, dtype=complex) / np.sqrt(ds)
    return projector(ket), (spec, spec, spec)


# ---------------------------------------------------------------------------
# figure commands
# ---------------------------------------------------------------------------

def cmd_fig1a(args) -> int:
    ratios = args.phi_over_gamma
    grid = TimeGrid.regular(args.tmax, args.step)

    def column(ratio):
        d_analytic = trace_distance_factor(1.0, ratio, grid.times)
        model = models.DepolarizingModel(gamma=1.0, phi=ratio)
        up, down = _preset_pair(2)
        trace = trace_distance_series(model, up, down, grid=grid)
        err = np.abs(trace.values - d_analytic * trace.values[0]).max()
        if err > 1e-8:
            raise NumericalDriftError(
                f"propagated trace distance deviates from the closed form "
                f"by {err:.2e} at phi/gamma={ratio:g}"
            )
        if trace.has_revival():
            raise NumericalDriftError(
                f"unexpected revival for static rates at phi/gamma={ratio:g}"
            )
        return d_analytic

    cols = _map_ordered(column, ratios, _jobs_from(args))
    header = ["t"] + [f"d(phi_over_gamma={r:g})" for r in ratios]
    rows = zip(grid.times, *cols)
    _write_csv(args.out, _meta(args, "fig1a", phi_over_gamma=args_list(ratios),
                               tmax=args.tmax, step=args.step), header, rows)
    return 0


def args_list(values) -> str:
    return ",".join(f"{v:g}" for v in values)


def cmd_fig1b(args) -> int:
    ratios = args.phi_over_gamma
    grid = TimeGrid.regular(args.tmax, args.step)
    rho0s, specs = reference_measurements()

    def column(ratio):
        model = models.DepolarizingModel(gamma=1.0, phi=ratio)
        res = cpf_equal_times(model, rho0s, None, specs, grid.times, scheme="d")
        return res.values[0, :, 0]

    cols = _map_ordered(column, ratios, _jobs_from(args))
    header = ["t"] + [f"cpf(phi_over_gamma={r:g})" for r in ratios]
    rows = zip(grid.times, *cols)
    _write_csv(args.out, _meta(args, "fig1b", phi_over_gamma=args_list(ratios),
                               tmax=args.tmax, step=args.step), header, rows)
    return 0


def cmd_fig2(args) -> int:
    ratios = args.omega_over_gamma
    grid = TimeGrid.regular(args.tmax, args.step)

    def column(ratio):
        w = coherent_weight_series(1.0, 1.0, ratio, grid)
        if ratio == 0.0:
            start = np.array([0.0, 0.0, 0.0, 1.0])
            oracle = solve_channel_coefficients(1.0, 1.0, start, grid).weight()
            err = np.abs(w - oracle).max()
            if err > 1e-8:
                raise NumericalDriftError(
                    f"drive-free column deviates from the incoherent "
                    f"oracle by {err:.2e}"
                )
        d = np.abs(4.0 * w - 1.0) / 3.0
        revival = np.zeros(d.size, dtype=bool)
        revival[:-1] = np.diff(d) > REVIVAL_TOL
        return d, revival

    results = _map_ordered(column, ratios, _jobs_from(args))
    header = ["t"]
    cols = []
    for r, (d, rev) in zip(ratios, results):
        header += [f"d(omega_over_gamma={r:g})", f"revival(omega_over_gamma={r:g})"]
        cols += [d, rev]
    rows = zip(grid.times, *cols)
    _write_csv(args.out, _meta(args, "fig2", omega_over_gamma=args_list(ratios),
                               tmax=args.tmax, step=args.step), header, rows)
    return 0


# ---------------------------------------------------------------------------
# sweep commands
# ---------------------------------------------------------------------------

def cmd_td(args) -> int:
    model = _resolve_model(args)
    grid = TimeGrid.regular(args.tmax, args.step)
    up, down = _preset_pair(model.ds)
    trace = trace_distance_series(model, up, down, grid=grid)
    header = ["t", "trace_distance", "revival"]
    rows = zip(trace.times, trace.values, trace.revivals)
    _write_csv(args.out, _meta(args, "td", model=args.model or "depolarizing",
                               tmax=args.tmax, step=args.step), header, rows)
    return 0


def cmd_bound(args) -> int:
    model = _resolve_model(args)
    grid = TimeGrid.regular(args.tmax, args.step)
    up, down = _preset_pair(model.ds)
    trace = trace_distance_series(model, up, down, grid=grid,
                                  with_bound_terms=True)
    n = trace.times.size
    header = ["t", "trace_distance", "env_term", "corr_rho", "corr_sigma",
              "increment_next", "slack_next"]
    rows = []
    for i in range(n):
        if i + 1 < n:
            inc = trace.values[i + 1] - trace.values[i]
            slack = (trace.env_terms[i] + trace.corr_rho[i]
                     + trace.corr_sigma[i] - inc)
        else:
            inc, slack = np.nan, np.nan
        rows.append((trace.times[i], trace.values[i], trace.env_terms[i],
                     trace.corr_rho[i], trace.corr_sigma[i], inc, slack))
    _write_csv(args.out, _meta(args, "bound", model=args.model or "depolarizing",
                               tmax=args.tmax, step=args.step), header, rows)
    return 0


def cmd_cpf(args) -> int:
    model = _resolve_model(args)
    rho0s, specs = _preset_measurements(model.ds)
    grid = TimeGrid.regular(args.tmax, args.step)
    ts = grid.times[grid.times > 0] if args.skip_zero else grid.times
    res = cpf_grid(model, rho0s, None, specs, ts, ts, scheme=args.scheme)
    ny = res.values.shape[0]
    header = ["t", "tau"] + [
        f"cpf(y={specs[1].outcomes[iy]:g})" for iy in range(ny)
    ]
    rows = []
    for it, t in enumerate(res.ts):
        for itau, tau in enumerate(res.taus):
            rows.append((t, tau, *res.values[:, it, itau]))
    _write_csv(args.out, _meta(args, "cpf", model=args.model or "depolarizing",
                               scheme=args.scheme, tmax=args.tmax,
                               step=args.step), header, rows)
    return 0


def cmd_check_bystander(args) -> int:
    model = _resolve_model(args)
    verdict, residual = models.check_bystander(model)
    text = f"bystander={'true' if verdict else 'false'} residual={residual:.3e}\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 0


# ---------------------------------------------------------------------------
# validation suite
# ---------------------------------------------------------------------------

def _validate_checks(seed: int):
    rng = np.random.default_rng(seed)
    checks = []

    grid = TimeGrid.regular(3.0, 0.0025)
    for ratio in (0.25, 1.0, 4.0):
        coeffs = solve_channel_coefficients(
            1.0, ratio, stationary_populations_vector(1.0, ratio), grid)
        err = np.abs(coeffs.weight()
                     - depolarizing_weight(1.0, ratio, grid.times)).max()
        checks.append((f"weight closed form phi/gamma={ratio:g}", err < 1e-8,
                       f"max err {err:.2e}"))

    model = models.DepolarizingModel(gamma=1.0, phi=1.0)
    rho0s, specs = reference_measurements()
    for t, tau in ((0.5, 0.5), (1.0, 1.0), (2.0, 1.0)):
        p = cpf_joint_deterministic(model, rho0s, None, specs, t, tau)
        got = cpf_correlation(p, specs)
        et, eu = np.exp(-t), np.exp(-tau)
        want = (4.0 / 81.0) * (1 - et) * (1 - eu) * (2 + et + eu + 5 * et * eu)
        err = np.abs(got - want).max()
        checks.append((f"cpf closed form t={t:g} tau={tau:g}", err < 1e-6,
                       f"max err {err:.2e}"))

    worst_r, worst_d = 0.0, np.inf
    for _ in range(6):
        cls = rng.integers(3)
        if cls == 0:
            m = models.random_classical_mixture(rng, nc=int(rng.integers(2, 4)))
        elif cls == 1:
            m = models.random_stochastic_env(rng, nc=int(rng.integers(2, 4)))
        else:
            m = models.random_quantum_bystander(rng, de=int(rng.integers(2, 4)))
        spec = random_measurement(rng)
        pol = random_policy(rng, 2, 2)
        prep = random_density_matrix(rng, 2, pure=True)
        res_d = cpf_grid(m, prep, None, (spec, spec, spec),
                         [0.7, 1.7], [0.9], scheme="d")
        res_r = cpf_grid(m, prep, None, (spec, spec, spec),
                         [0.7, 1.7], [0.9], scheme="r", policy=pol)
        worst_r = max(worst_r, res_r.max_abs())
        worst_d = min(worst_d, res_d.max_abs())
    checks.append(("bystander random-scheme null", worst_r < 1e-10,
                   f"max |cpf_r| {worst_r:.2e}"))
    checks.append(("bystander deterministic response", worst_d > 1e-6,
                   f"min instance max |cpf_d| {worst_d:.2e}"))

    worst_slack = np.inf
    for _ in range(10):
        m = models.random_unitary_model(rng)
        rho = projector(random_measurement(rng).ket(0))
        sig = projector(random_measurement(rng).ket(1))
        b = trace_distance_bound(m, rho, sig, m.env0, float(rng.uniform(0.2, 2.0)),
                                 float(rng.uniform(0.2, 2.0)))
        worst_slack = min(worst_slack, b.slack)
    checks.append(("revival bound slack", worst_slack > -1e-9,
                   f"min slack {worst_slack:.3e}"))
    return checks


def cmd_validate(args) -> int:
    checks = _validate_checks(args.seed)
    failures = 0
    lines = []
    for name, ok, detail in checks:
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += not ok
    text = "\n".join(lines) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, tmax: float, step: float) -> None:
    p.add_argument("--gamma", type=float, default=1.0,
                   help="base decay rate (time unit anchor)")
    p.add_argument("--phi", type=float, default=1.0, help="return rate")
    p.add_argument("--omega", type=float, default=0.0,
                   help="coherent drive frequency")
    p.add_argument("--tmax", type=float, default=tmax)
    p.add_argument("--step", type=float, default=step)
    p.add_argument("--model", default=None, help="model definition JSON file")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker threads (QFLOW_JOBS fallback; default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qflow",
        description="memory-effect witnesses for system-environment models",
    )
    parser.add_argument("--version", action="version",
                        version=f"qflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fig1a", help="trace-distance decay factor dataset")
    _add_common(p, tmax=6.0, step=0.01)
    p.add_argument("--phi-over-gamma", type=_float_list, default=[0.25, 1.0, 4.0])
    p.set_defaults(func=cmd_fig1a)

    p = sub.add_parser("fig1b", help="equal-time past-future correlation dataset")
    _add_common(p, tmax=6.0, step=0.01)
    p.add_argument("--phi-over-gamma", type=_float_list, default=[0.25, 1.0, 4.0])
    p.set_defaults(func=cmd_fig1b)

    p = sub.add_parser("fig2", help="coherent-drive trace-distance dataset")
    _add_common(p, tmax=10.0, step=0.005)
    p.add_argument("--omega-over-gamma", type=_float_list,
                   default=[0.0, 0.5, 1.0, 2.0, 5.0])
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("td", help="trace-distance series for a model")
    _add_common(p, tmax=6.0, step=0.01)
    p.set_defaults(func=cmd_td)

    p = sub.add_parser("bound", help="revival bound terms along a grid")
    _add_common(p, tmax=4.0, step=0.05)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("cpf", help="past-future correlations on a (t, tau) grid")
    _add_common(p, tmax=5.0, step=0.25)
    p.add_argument("--scheme", choices=("d", "r"), default="d")
    p.add_argument("--skip-zero", action="store_true",
                   help="drop t=0 from the grid")
    p.set_defaults(func=cmd_cpf)

    p = sub.add_parser("check-bystander",
                       help="test environment-marginal independence")
    _add_common(p, tmax=0.0, step=1.0)
    p.set_defaults(func=cmd_check_bystander)

    p = sub.add_parser("validate", help="run the oracle/property suite")
    _add_common(p, tmax=0.0, step=1.0)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"qflow: configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"qflow: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalDriftError as exc:
        print(f"qflow: numeric invariant breached: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
