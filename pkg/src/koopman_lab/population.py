"""Concrete three-population chaotic model: convergence-region scans,
trajectory comparisons, and the chaos demonstration.

The model constants below are entered verbatim; coupling columns are ordered
(j, k) in {(0,0), (0,1), (0,2), (1,0), (1,1), (1,2), (2,0), (2,1), (2,2)}.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .nip import (
    PopulationModel,
    nip_evolve,
    reference_y_trajectory,
    vacancy_evolve,
    y_to_x,
)
from .polyflow import SparseTensor, Trajectory, integrate_rhs

_R = (95.4912, 48.8281, 30.1714)
_J_ROWS = (
    (-0.264803, -13.6839, 0.931878, 0.0, 983.541, 69.1103, 0.0, 0.0, 1.26601),
    (0.00120019, -1.26625, -0.00141069, 0.0, 46.6796, 2.29013, 0.0, 0.0,
     0.000420895),
    (-1.10445, 42.4425, 0.203853, 0.0, -477.852, 17.3411, 0.0, 0.0, 1.28499),
)

DEFAULT_T_END = 0.1
DEFAULT_ORDERS = (1, 3)
CHAOS_T_END = 2.0
EQUILIBRIUM_TOL = 0.1


def paper_model() -> PopulationModel:
    """The three-population instance with chaotic interacting dynamics."""
    d = 3
    J = SparseTensor(2, d)
    for i, row in enumerate(_J_ROWS):
        for col, val in enumerate(row):
            if val != 0.0:
                J.add(i, (col // d, col % d), val)
    return PopulationModel(d, np.array(_R), np.ones(d), J)


def default_threads() -> int:
    env = os.environ.get("KOOPMAN_LAB_THREADS", "")
    if env:
        return max(1, int(env))
    return 1


# ---------------------------------------------------------------------------
# convergence scan

@dataclass
class ScanResult:
    """Gridded convergence verdicts for both linearization routes."""

    x2_values: np.ndarray
    x3_values: np.ndarray
    carleman_verdict: np.ndarray  # (n2, n3) of str
    nip_verdict: np.ndarray
    eps_c_low: np.ndarray         # (n2, n3) real, +inf on blow-up
    eps_c_high: np.ndarray
    eps_k_low: np.ndarray
    eps_k_high: np.ndarray
    meta: dict = field(default_factory=dict)


def _verdict(low, high) -> str:
    if np.isfinite(low.eps_max) and np.isfinite(high.eps_max):
        # errors at machine-zero (fixed point) count as converged
        if high.eps_max <= 1e-8:
            return "converged"
        return "converged" if high.eps_max < low.eps_max else "diverged"
    if low.pole_invalid or high.pole_invalid:
        return "pole-invalid"
    return "diverged"


def _scan_cell(args):
    model, x0, orders, t_end, tol = args
    sample_times = np.linspace(0.0, t_end, 129)
    reference = reference_y_trajectory(model, x0, t_end,
                                       sample_times=sample_times)
    runs_c = [vacancy_evolve(model, x0, n, t_end, tol, sample_times,
                             reference) for n in orders]
    runs_k = [nip_evolve(model, x0, n, t_end, tol, sample_times, reference)
              for n in orders]
    return (_verdict(runs_c[0], runs_c[1]), _verdict(runs_k[0], runs_k[1]),
            runs_c[0].eps_max, runs_c[1].eps_max,
            runs_k[0].eps_max, runs_k[1].eps_max)


def convergence_scan(model: PopulationModel, x1_fixed: float = 1.0,
                     x2_range=None, x3_range=None,
                     orders=DEFAULT_ORDERS, t_end: float = DEFAULT_T_END,
                     tol: float = 1e-10, threads: int = None) -> ScanResult:
    """Per-cell verdicts over initial conditions (x1_fixed, x2, x3).

    A route converges at a cell when the error at the higher lift order is
    strictly smaller than at the lower order, both finite.  Cells are
    independent; the merge is by grid index, so the result does not depend
    on the thread count.
    """
    if x2_range is None:
        x2_range = np.arange(0.5, 2.0 + 1e-9, 0.05)
    if x3_range is None:
        x3_range = np.arange(0.5, 2.0 + 1e-9, 0.05)
    x2_range = np.asarray(x2_range, dtype=float)
    x3_range = np.asarray(x3_range, dtype=float)
    if x2_range.size == 0 or x3_range.size == 0:
        raise ValueError("scan ranges must be nonempty")
    if orders[0] >= orders[1]:
        raise ValueError("orders must be (low, high) with low < high")
    if threads is None:
        threads = default_threads()

    jobs = [(model, np.array([x1_fixed, x2, x3]), tuple(orders), t_end, tol)
            for x2 in x2_range for x3 in x3_range]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(_scan_cell, jobs, chunksize=8))
    else:
        cells = [_scan_cell(job) for job in jobs]

    n2, n3 = x2_range.size, x3_range.size
    shape = (n2, n3)
    res = ScanResult(
        x2_values=x2_range, x3_values=x3_range,
        carleman_verdict=np.empty(shape, dtype=object),
        nip_verdict=np.empty(shape, dtype=object),
        eps_c_low=np.empty(shape), eps_c_high=np.empty(shape),
        eps_k_low=np.empty(shape), eps_k_high=np.empty(shape),
        meta={"x1": x1_fixed, "orders": tuple(orders), "t_end": t_end,
              "tol": tol})
    for idx, cell in enumerate(cells):
        a, b = divmod(idx, n3)
        (res.carleman_verdict[a, b], res.nip_verdict[a, b],
         res.eps_c_low[a, b], res.eps_c_high[a, b],
         res.eps_k_low[a, b], res.eps_k_high[a, b]) = cell
    return res


def scan_to_csv(res: ScanResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x2", "x3", "carleman_verdict", "nip_verdict",
                    "eps_c_low", "eps_c_high", "eps_k_low", "eps_k_high"])
        for a, x2 in enumerate(res.x2_values):
            for b, x3 in enumerate(res.x3_values):
                w.writerow([f"{x2:.17g}", f"{x3:.17g}",
                            res.carleman_verdict[a, b],
                            res.nip_verdict[a, b],
                            f"{res.eps_c_low[a, b]:.17g}",
                            f"{res.eps_c_high[a, b]:.17g}",
                            f"{res.eps_k_low[a, b]:.17g}",
                            f"{res.eps_k_high[a, b]:.17g}"])


# ---------------------------------------------------------------------------
# trajectories

def _x_rhs(model: PopulationModel):
    r, X = model.r, model.X
    rows, _, vals = model.J.arrays()
    cols = np.array([list(c) for _, c, _ in model.J.entries()], dtype=np.int64)

    def rhs(t, x):
        eta = (X - x) / x
        inter = np.zeros(model.dim, dtype=complex)
        np.add.at(inter, rows, vals * eta[cols[:, 0]] * eta[cols[:, 1]])
        return r * x * (1.0 - x / X) - x * x * inter

    return rhs


def exact_x_trajectory(model: PopulationModel, x0, t_end: float,
                       tol: float = 1e-12, sample_times=None) -> Trajectory:
    """Reference integration of the original rational population dynamics."""
    x0 = np.asarray(x0, dtype=complex)
    if np.any(x0.real <= 0):
        raise ValueError("populations must start positive")
    return integrate_rhs(_x_rhs(model), x0, t_end, tol, sample_times)


def trajectory_compare(model: PopulationModel, x0, order: int,
                       t_end: float = DEFAULT_T_END, tol: float = 1e-10):
    """(exact, vacancy-lift, mode-lift) trajectories in x coordinates."""
    sample_times = np.linspace(0.0, t_end, 129)
    exact = exact_x_trajectory(model, x0, t_end, sample_times=sample_times)
    run_c = vacancy_evolve(model, x0, order, t_end, tol, sample_times)
    run_k = nip_evolve(model, x0, order, t_end, tol, sample_times)

    def to_x(run):
        xs = np.array([y_to_x(model, y) for y in run.y_approx.states])
        return Trajectory(run.y_approx.times, xs,
                          diverged=run.y_approx.diverged)

    return exact, to_x(run_c), to_x(run_k)


@dataclass
class ChaosResult:
    trajectory: Trajectory
    projection: np.ndarray      # columns (t, x2, x3)
    final_distance: float       # from the all-capacity equilibrium at t_end
    settled: bool


def chaos_demo(model: PopulationModel, x0,
               t_end: float = CHAOS_T_END) -> ChaosResult:
    """Reference trajectory plus the (x2, x3) projection of the attractor.

    "Settled" means the state sits within 0.1 of the all-capacity
    equilibrium at t_end — a deliberately qualitative criterion.
    """
    sample_times = np.linspace(0.0, t_end, 2001)
    traj = exact_x_trajectory(model, x0, t_end, sample_times=sample_times)
    proj = np.column_stack([traj.times, traj.states[:, 1].real,
                            traj.states[:, 2].real])
    dist = float(np.linalg.norm(traj.final.real - model.X))
    return ChaosResult(traj, proj, dist,
                       settled=dist <= EQUILIBRIUM_TOL and not traj.diverged)
