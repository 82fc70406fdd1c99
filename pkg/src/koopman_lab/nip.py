"""Interaction-picture coordinates for the interacting logistic population
model.

The model is dx_i/dt = r_i x_i (1 - x_i/X_i) - x_i^2 sum_{jk} J_{i,jk}
eta_j eta_k with eta_j = (X_j - x_j)/x_j.  Two linearization routes are
provided:

* vacancy route: y_i = 1 - x_i/X_i obeys a rational ODE whose Taylor
  truncation at the lift order gives polynomial tensors F_1..F_{N_C};
* mode route: eta obeys an exactly quadratic ODE (G_1, G_2), so the only
  error source is the lift truncation itself.

Both truncation errors are measured in y coordinates against a reference
obtained by integrating the exact quadratic eta dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .carleman import LiftedState, build_carleman, evolve_lifted, initial_lift
from .polyflow import (
    DimensionError,
    PolySystem,
    SparseTensor,
    Trajectory,
    integrate_reference,
    quadratic_r_number,
    spectral_norm,
)

REFERENCE_TOL = 1e-12
POLE_TOL = 1e-9


@dataclass
class PopulationModel:
    """Interacting logistic populations (growth r, capacity X, couplings J)."""

    dim: int
    r: np.ndarray
    X: np.ndarray
    J: SparseTensor  # degree 2; entry (i, (j, k)) couples eta_j eta_k into i

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.r.shape != (self.dim,) or self.X.shape != (self.dim,):
            raise DimensionError("r and X must be length-d vectors")
        if np.any(self.r <= 0) or np.any(self.X <= 0):
            raise ValueError("growth rates and capacities must be positive")
        if self.J.degree != 2 or self.J.dim != self.dim:
            raise DimensionError("J must be a degree-2 tensor of matching dim")


# ---------------------------------------------------------------------------
# coordinate maps

def x_to_eta(model: PopulationModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("populations must be positive for the mode map")
    return (model.X - x) / x


def eta_to_x(model: PopulationModel, eta: np.ndarray) -> np.ndarray:
    eta = np.asarray(eta)
    return model.X / (1.0 + eta)


def x_to_y(model: PopulationModel, x: np.ndarray) -> np.ndarray:
    return 1.0 - np.asarray(x) / model.X


def y_to_x(model: PopulationModel, y: np.ndarray) -> np.ndarray:
    return model.X * (1.0 - np.asarray(y))


def y_to_eta(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    return y / (1.0 - y)


def eta_to_y_back(g1: np.ndarray) -> np.ndarray:
    """Back map y~_i = g_i / (1 + g_i); poles at g_i = -1 raise."""
    g1 = np.asarray(g1)
    if np.any(np.abs(1.0 + g1) < POLE_TOL):
        raise ValueError("back map pole: component at -1")
    return g1 / (1.0 + g1)


# ---------------------------------------------------------------------------
# tensor generation

def vacancy_taylor_tensors(model: PopulationModel, order: int) -> PolySystem:
    """Degree-truncated tensors of the vacancy dynamics.

    dy_i/dt = -r_i y_i (1 - y_i)
              + X_i sum_{jk} J_{i,jk} [ sum_{m,n>=1} y_j^m y_k^n
                                        - 2 y_i sum y_j^m y_k^n
                                        + y_i^2 sum y_j^m y_k^n ],
    with the three geometric sums cut at total degree order, order-1 and
    order-2 respectively so every kept monomial has degree <= order.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    d = model.dim
    tensors = [None] + [SparseTensor(k, d) for k in range(1, order + 1)]
    for i in range(d):
        tensors[1].add(i, (i,), -model.r[i])
        if order >= 2:
            tensors[2].add(i, (i, i), model.r[i])
    for i, (j, k), val in model.J.entries():
        coeff = model.X[i] * val
        for m in range(1, order):
            for n in range(1, order - m + 1):
                cols = (j, k) + (j,) * (m - 1) + (k,) * (n - 1)
                tensors[m + n].add(i, cols, coeff)
                if m + n + 1 <= order:
                    tensors[m + n + 1].add(i, (j, k, i) + cols[2:], -2 * coeff)
                if m + n + 2 <= order:
                    tensors[m + n + 2].add(i, (j, k, i, i) + cols[2:], coeff)
    return PolySystem(d, tensors)


def koopman_tensors(model: PopulationModel):
    """Exact quadratic mode dynamics: G1 = diag(-r), [G2]_{i,(j,k)} = X_i J_{i,jk}."""
    G1 = np.diag(-model.r).astype(complex)
    G2 = SparseTensor(2, model.dim)
    for i, (j, k), val in model.J.entries():
        G2.add(i, (j, k), model.X[i] * val)
    return G1, G2


def koopman_system(model: PopulationModel) -> PolySystem:
    G1, G2 = koopman_tensors(model)
    t1 = SparseTensor.from_dense_flat(1, G1)
    return PolySystem(model.dim, [None, t1, G2])


def r_number_nip(model: PopulationModel, eta0: np.ndarray) -> float:
    """Convergence number |G2| |eta0| / min_i r_i of the mode dynamics."""
    G1, G2 = koopman_tensors(model)
    return quadratic_r_number(None, G1, G2, np.asarray(eta0, dtype=complex))


def guaranteed_radius(model: PopulationModel) -> float:
    """Largest |eta(0)| with a convergence guarantee: min_i r_i / |G2|."""
    _, G2 = koopman_tensors(model)
    nG2 = spectral_norm(G2.dense_flat())
    if nG2 == 0:
        return np.inf
    return float(np.min(model.r)) / nG2


def guaranteed_radius_squared(model: PopulationModel) -> float:
    rad = guaranteed_radius(model)
    return rad * rad


# ---------------------------------------------------------------------------
# reference flow and truncation-error runs

def reference_y_trajectory(model: PopulationModel, x0, t_end: float,
                           tol: float = REFERENCE_TOL,
                           sample_times=None) -> Trajectory:
    """Reference y(t): the exact quadratic eta flow mapped through eta/(1+eta)."""
    eta0 = x_to_eta(model, x0)
    traj = integrate_reference(koopman_system(model), eta0.astype(complex),
                               t_end, tol, sample_times)
    y = traj.states / (1.0 + traj.states)
    return Trajectory(traj.times, y, diverged=traj.diverged)


@dataclass
class TruncationRun:
    """One lifted evolution measured against the reference in y coordinates."""

    lifted: Trajectory
    y_approx: Trajectory
    reference: Trajectory
    eps: np.ndarray       # per-sample error; NaN at pole-invalid samples
    eps_max: float        # +inf when either trajectory diverged
    pole_invalid: bool


def _error_run(model, reference, lifted_traj, dim, order,
               back_map) -> TruncationRun:
    n = min(reference.times.size, lifted_traj.times.size)
    eps = np.full(n, np.nan)
    y_rows = np.zeros((n, dim), dtype=complex)
    pole = False
    for s in range(n):
        g1 = LiftedState(dim, order, lifted_traj.states[s]).block(1)
        try:
            y_tilde = back_map(g1)
        except ValueError:
            pole = True
            y_rows[s] = np.nan
            continue
        y_rows[s] = y_tilde
        eps[s] = np.linalg.norm(reference.states[s] - y_tilde)
    finite = eps[np.isfinite(eps)]
    eps_max = float(np.max(finite)) if finite.size else np.nan
    if reference.diverged or lifted_traj.diverged or \
            n < max(reference.times.size, lifted_traj.times.size):
        eps_max = np.inf
    y_traj = Trajectory(lifted_traj.times[:n], y_rows,
                        diverged=lifted_traj.diverged)
    return TruncationRun(lifted_traj, y_traj, reference, eps, eps_max, pole)


def vacancy_evolve(model: PopulationModel, x0, order: int, t_end: float,
                   tol: float = 1e-10, sample_times=None,
                   reference: Trajectory = None) -> TruncationRun:
    """Lift y(0) through the Taylor-truncated vacancy tensors; eps_C run."""
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, 129)
    if reference is None:
        reference = reference_y_trajectory(model, x0, t_end,
                                           sample_times=sample_times)
    y0 = x_to_y(model, x0)
    op = build_carleman(vacancy_taylor_tensors(model, order), order)
    traj, _ = evolve_lifted(op, initial_lift(y0, order), t_end, tol,
                            sample_times)
    return _error_run(model, reference, traj, model.dim, order, lambda g: g)


def nip_evolve(model: PopulationModel, x0, order: int, t_end: float,
               tol: float = 1e-10, sample_times=None,
               reference: Trajectory = None) -> TruncationRun:
    """Lift eta(0) through the exact quadratic mode tensors; eps_K run."""
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, 129)
    if reference is None:
        reference = reference_y_trajectory(model, x0, t_end,
                                           sample_times=sample_times)
    eta0 = x_to_eta(model, x0)
    op = build_carleman(koopman_system(model), order)
    traj, _ = evolve_lifted(op, initial_lift(eta0, order), t_end, tol,
                            sample_times)
    return _error_run(model, reference, traj, model.dim, order,
                      eta_to_y_back)


# ---------------------------------------------------------------------------
# serialization

def model_to_json(model: PopulationModel) -> str:
    return json.dumps({
        "r": list(model.r),
        "X": list(model.X),
        "J": [[i, j, k, val.real]
              for i, (j, k), val in model.J.entries()],
    })


def model_from_json(text: str) -> PopulationModel:
    data = json.loads(text)
    r = np.asarray(data["r"], dtype=float)
    X = np.asarray(data["X"], dtype=float)
    if r.size != X.size:
        raise DimensionError("r and X lengths differ")
    J = SparseTensor(2, r.size)
    for i, j, k, val in data["J"]:
        J.add(int(i), (int(j), int(k)), float(val))
    return PopulationModel(r.size, r, X, J)
