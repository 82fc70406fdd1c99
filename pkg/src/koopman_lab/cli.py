"""Command-line entry point.

Every subcommand reads an optional JSON config, runs deterministically under
the given seed, and writes CSV/JSON outputs formatted with 17 significant
digits so reruns are byte-identical.  Exit codes: 0 success, 2 config error
(the diagnostic names the offending key or flag), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import fermion, nip, population, rsep, spectral

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


class NumericalError(Exception):
    pass


def _load_config(path, allowed, required=()):
    if path is None:
        data = {}
    else:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {key!r}")
    for key in required:
        if key not in data:
            raise ConfigError(f"missing config key: {key!r}")
    return data


def _write_csv(path, header, rows):
    def fmt(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, complex) or isinstance(v, np.complexfloating):
            raise NumericalError("refusing to write complex value to CSV")
        return f"{float(v):.17g}"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _population_model(data):
    if "model" in data and data["model"] is not None:
        try:
            return nip.model_from_json(json.dumps(data["model"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad 'model' entry: {exc}")
    return population.paper_model()


def _parse_grid(text):
    try:
        lo, hi, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError("flag --grid expects LO:HI:STEP")
    if step <= 0 or hi < lo:
        raise ConfigError("flag --grid needs LO <= HI and STEP > 0")
    return np.arange(lo, hi + 1e-9 * step, step)


# ---------------------------------------------------------------------------
# population / carleman subcommands

def _cmd_population_scan(args):
    data = _load_config(args.config, {"model", "x1", "t_end", "orders"})
    model = _population_model(data)
    grid = _parse_grid(args.grid) if args.grid else None
    orders = tuple(args.orders or data.get("orders",
                                           population.DEFAULT_ORDERS))
    res = population.convergence_scan(
        model, x1_fixed=float(data.get("x1", 1.0)),
        x2_range=grid, x3_range=grid, orders=orders,
        t_end=args.t_end or data.get("t_end", population.DEFAULT_T_END),
        tol=args.tol or 1e-10, threads=args.threads)
    population.scan_to_csv(res, args.out)
    return EXIT_OK


def _cmd_population_traj(args):
    data = _load_config(args.config, {"model", "x0", "order", "t_end"})
    model = _population_model(data)
    x0 = np.asarray(data.get("x0", [1.0, 1.4, 1.4]), dtype=float)
    order = int(args.orders[0]) if args.orders else int(data.get("order", 3))
    t_end = args.t_end or data.get("t_end", population.DEFAULT_T_END)
    exact, carl, mode = population.trajectory_compare(
        model, x0, order, t_end, tol=args.tol or 1e-10)
    if exact.diverged:
        raise NumericalError("reference trajectory diverged")
    header = ["t"] + [f"x{i+1}_exact" for i in range(model.dim)] \
        + [f"x{i+1}_carleman" for i in range(model.dim)] \
        + [f"x{i+1}_nip" for i in range(model.dim)]
    rows = []
    n = min(exact.times.size, carl.times.size, mode.times.size)
    for s in range(n):
        rows.append([exact.times[s]]
                    + list(exact.states[s].real)
                    + list(carl.states[s].real)
                    + list(mode.states[s].real))
    _write_csv(args.out, header, rows)
    return EXIT_OK


def _cmd_population_chaos(args):
    data = _load_config(args.config, {"model", "x0", "t_end"})
    model = _population_model(data)
    x0 = np.asarray(data.get("x0", [0.05, 1.3, 0.025]), dtype=float)
    t_end = args.t_end or data.get("t_end", population.CHAOS_T_END)
    res = population.chaos_demo(model, x0, t_end)
    if res.trajectory.diverged:
        raise NumericalError("chaos trajectory diverged")
    _write_csv(args.out, ["t", "x2", "x3"], res.projection)
    print(f"settled={res.settled} final_distance={res.final_distance:.17g}")
    return EXIT_OK


def _error_profile_cmd(args, evolve):
    data = _load_config(args.config, {"model", "x0", "orders", "t_end"})
    model = _population_model(data)
    x0 = np.asarray(data.get("x0", [1.0, 1.4, 1.4]), dtype=float)
    orders = [int(n) for n in (args.orders or data.get("orders", [1, 3, 6]))]
    t_end = args.t_end or data.get("t_end", population.DEFAULT_T_END)
    sample_times = np.linspace(0.0, t_end, 129)
    reference = nip.reference_y_trajectory(model, x0, t_end,
                                           sample_times=sample_times)
    runs = [evolve(model, x0, n, t_end, args.tol or 1e-10, sample_times,
                   reference) for n in orders]
    header = ["t"] + [f"eps_order_{n}" for n in orders]
    rows = []
    for s in range(sample_times.size):
        row = [sample_times[s]]
        for run in runs:
            v = run.eps[s] if s < run.eps.size else np.inf
            row.append(v if np.isfinite(v) else np.inf)
        rows.append(row)
    _write_csv(args.out, header, rows)
    for n, run in zip(orders, runs):
        print(f"order={n} eps_max={run.eps_max:.17g}")
    return EXIT_OK


def _cmd_carleman_error(args):
    return _error_profile_cmd(args, nip.vacancy_evolve)


def _cmd_nip_error(args):
    return _error_profile_cmd(args, nip.nip_evolve)


# ---------------------------------------------------------------------------
# fermion subcommands

def _fermion_setup(args, extra=()):
    allowed = {"system", "gamma0", "t_end"} | set(extra)
    data = _load_config(args.config, allowed, required=("system",))
    try:
        sys_ = fermion.system_from_json(json.dumps(data["system"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'system' entry: {exc}")
    if "gamma0" in data:
        gamma0 = fermion.CovarianceState(np.asarray(data["gamma0"],
                                                    dtype=float))
    else:
        rng = np.random.default_rng(args.seed)
        gamma0 = fermion.CovarianceState(
            fermion.random_antisymmetric(2 * sys_.N, rng))
    return data, sys_, gamma0


def _cmd_fermion_evolve(args):
    data, sys_, gamma0 = _fermion_setup(args)
    t_end = args.t_end or data.get("t_end", 1.0)
    final, _, _ = fermion.evolve_covariance(sys_, gamma0, t_end,
                                            tol=args.tol or 1e-10)
    rows = [(i, j, final.Gamma[i, j])
            for i in range(2 * sys_.N) for j in range(i + 1, 2 * sys_.N)]
    _write_csv(args.out, ["i", "j", "value"], rows)
    return EXIT_OK


def _cmd_fermion_heat(args):
    data, sys_, gamma0 = _fermion_setup(args, extra=("samples",))
    t_end = args.t_end or data.get("t_end", 1.0)
    times = np.linspace(0.0, t_end, int(data.get("samples", 129)))
    _, ts, gammas = fermion.evolve_covariance(sys_, gamma0, t_end,
                                              tol=args.tol or 1e-10,
                                              sample_times=times)
    e0 = fermion.energy(sys_.h, gamma0)
    rows = [(t, (e0 - fermion.energy(sys_.h, g)) / sys_.N)
            for t, g in zip(ts, gammas)]
    _write_csv(args.out, ["t", "heat_per_fermion"], rows)
    return EXIT_OK


def _cmd_fermion_decay(args):
    data, sys_, gamma0 = _fermion_setup(args)
    try:
        spec = fermion.decay_spectrum(sys_, gamma0)
    except fermion.SecularError as exc:
        raise NumericalError(str(exc))
    rows = [(k, l, rate, weight)
            for (k, l), rate, weight in zip(spec.pairs, spec.rates,
                                            spec.weights)]
    _write_csv(args.out, ["k", "l", "rate", "weight"], rows)
    print(f"gap={spec.gap:.17g}")
    return EXIT_OK


def _cmd_fermion_steady(args):
    data = _load_config(args.config, {"system"}, required=("system",))
    try:
        sys_ = fermion.system_from_json(json.dumps(data["system"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'system' entry: {exc}")
    try:
        steady = fermion.steady_state(sys_)
    except fermion.GaplessError as exc:
        raise NumericalError(str(exc))
    rows = [(i, j, steady.Gamma[i, j])
            for i in range(2 * sys_.N) for j in range(i + 1, 2 * sys_.N)]
    _write_csv(args.out, ["i", "j", "value"], rows)
    return EXIT_OK


def _cmd_fermion_oracle_check(args):
    worst = 0.0
    rng = np.random.default_rng(args.seed)
    for trial in range(args.trials):
        N = int(rng.integers(1, args.N + 1))
        seed = int(rng.integers(0, 2**31))
        for t_end in (0.1, 1.0):
            dev = fermion.oracle_deviation(N, seed, t_end)
            worst = max(worst, dev)
    print(f"max_deviation={worst:.17g}")
    if worst > 1e-6:
        raise NumericalError(f"oracle deviation {worst} exceeds 1e-6")
    return EXIT_OK


# ---------------------------------------------------------------------------
# rsep

def _cmd_rsep_sweep(args):
    data = _load_config(args.config, {"points", "t_end"},
                        required=("points",))
    params = []
    for entry in data["points"]:
        for key in entry:
            if key not in {"d", "beta", "gamma", "delta", "seed"}:
                raise ConfigError(f"unknown sweep key: {key!r}")
        try:
            A = None
            if "seed" in entry:
                A = rsep.haar_unitary(int(entry["d"]), int(entry["seed"]))
            params.append(rsep.RsepParams(int(entry["d"]),
                                          float(entry["beta"]),
                                          float(entry["gamma"]),
                                          float(entry["delta"]), A=A))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad sweep point: {exc}")
    t_end = args.t_end or data.get("t_end", 1.0)
    try:
        rows = rsep.sweep(params, t_end)
    except rsep.PoleError as exc:
        raise NumericalError(str(exc))
    rsep.sweep_to_csv(rows, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# spectral

def _spectral_modes(data):
    try:
        arr = np.asarray(data["modes"], dtype=float)
        a = arr[:, 2] + 1j * arr[:, 3]
        a = a / np.linalg.norm(a)
        return spectral.NormalKoopman(arr[:, 0], arr[:, 1], a)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad 'modes' entry: {exc}")


def _spectral_window(data):
    try:
        return spectral.kaiser_window(int(data.get("J", 401)),
                                      float(data.get("sigma", 3.0)))
    except ValueError as exc:
        raise ConfigError(f"bad window parameters: {exc}")


_SPECTRAL_KEYS = {"modes", "J", "sigma", "dt", "T1", "n_samples"}


def _cmd_spectral_window(args):
    data = _load_config(args.config, {"J", "sigma", "theta", "dt"})
    window = _spectral_window(data)
    dt = float(data.get("dt", 1.0))
    theta = float(data.get("theta", 0.0))
    p = spectral.qpe_distribution(window, theta)
    rows = []
    for ell in range(window.J):
        th, om = spectral.decode(ell, window.J, dt)
        rows.append((ell, th, om, p[ell]))
    _write_csv(args.out, ["ell", "theta_hat", "omega_hat", "p"], rows)
    return EXIT_OK


def _spectral_emulation(args, n_samples):
    data = _load_config(args.config, _SPECTRAL_KEYS, required=("modes",))
    modes = _spectral_modes(data)
    window = _spectral_window(data)
    dt = float(data.get("dt", 1.0))
    if "T1" in data:
        T1 = float(data["T1"])
    else:
        try:
            T1 = spectral.suppression_time(modes.gap, 1e-3)
        except ValueError:
            T1 = 0.0
    try:
        p, tv = spectral.emulate_spectral_qka(modes, window, T1, dt)
        p_ideal = spectral.ideal_mode_distribution(modes, dt, window)
    except (spectral.AliasingError, ValueError) as exc:
        raise NumericalError(str(exc))
    if n_samples is None:
        n_samples = int(data.get("n_samples", 0))
    counts = spectral.sample_outcomes(p, n_samples, args.seed) \
        if n_samples else np.zeros(window.J, dtype=int)
    rows = []
    for ell in range(window.J):
        th, om = spectral.decode(ell, window.J, dt)
        rows.append((ell, th, om, p_ideal[ell], p[ell], counts[ell]))
    _write_csv(args.out, ["ell", "theta_hat", "omega_hat", "p_ideal",
                          "p_emulated", "count"], rows)
    print(f"tv={tv:.17g}")
    return EXIT_OK


def _cmd_spectral_emulate(args):
    return _spectral_emulation(args, n_samples=0)


def _cmd_spectral_sample(args):
    return _spectral_emulation(args, n_samples=None)


def _cmd_ode_history(args):
    data = _load_config(args.config, {"A", "x0", "m", "p", "l", "h"},
                        required=("A", "x0", "m", "p", "l", "h"))
    try:
        A = np.asarray(data["A"], dtype=complex)
        x0 = np.asarray(data["x0"], dtype=complex)
        hist = spectral.history_system(A, x0, int(data["m"]), int(data["p"]),
                                       int(data["l"]), float(data["h"]))
    except ValueError as exc:
        raise NumericalError(str(exc))
    resid, final_err = spectral.history_residuals(hist, x0)
    rows = [(s, i, hist.blocks[s, i].real, hist.blocks[s, i].imag)
            for s in range(hist.m + hist.p) for i in range(x0.size)]
    _write_csv(args.out, ["s", "i", "re", "im"], rows)
    print(f"recurrence_residual={resid:.17g} final_error={final_err:.17g}")
    return EXIT_OK


# ---------------------------------------------------------------------------

_COMMANDS = {
    "population-scan": (_cmd_population_scan, True),
    "population-traj": (_cmd_population_traj, True),
    "population-chaos": (_cmd_population_chaos, True),
    "carleman-error": (_cmd_carleman_error, True),
    "nip-error": (_cmd_nip_error, True),
    "fermion-evolve": (_cmd_fermion_evolve, True),
    "fermion-heat": (_cmd_fermion_heat, True),
    "fermion-decay": (_cmd_fermion_decay, True),
    "fermion-steady": (_cmd_fermion_steady, True),
    "fermion-oracle-check": (_cmd_fermion_oracle_check, False),
    "rsep-sweep": (_cmd_rsep_sweep, True),
    "spectral-window": (_cmd_spectral_window, True),
    "spectral-emulate": (_cmd_spectral_emulate, True),
    "spectral-sample": (_cmd_spectral_sample, True),
    "ode-history": (_cmd_ode_history, True),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="koopman-lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, needs_out) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--out", default=None, required=needs_out)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--t-end", dest="t_end", type=float, default=None)
        p.add_argument("--orders", type=int, nargs="+", default=None)
        p.add_argument("--grid", default=None)
        if name == "fermion-oracle-check":
            p.add_argument("--N", type=int, default=3)
            p.add_argument("--trials", type=int, default=20)
    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code != 0 else EXIT_OK
    handler, _ = _COMMANDS[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run(sys.argv[1:]))
