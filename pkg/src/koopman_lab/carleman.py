"""Truncated lifting of a polynomial system to the linear dynamics of its
monomial blocks, applied matrix-free.

The lifted generator is block upper-triangular: block i couples to block
i+j through position sums of the degree-(j+1) tensor.  The hot apply kernel
has a compiled implementation (Cython) and a numpy fallback; the compiled one
is selected at import when available.  Set KOOPMAN_LAB_FORCE_PY=1 to force
the fallback (used by the benchmark).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _carleman_py
from .polyflow import (
    DimensionError,
    OverflowGuardError,
    PolySystem,
    Trajectory,
    integrate_rhs,
    kron_power,
)

try:
    from . import _carleman_cy
except ImportError:  # pragma: no cover - build-environment dependent
    _carleman_cy = None

USE_COMPILED = _carleman_cy is not None and \
    os.environ.get("KOOPMAN_LAB_FORCE_PY", "") != "1"

DIM_LIMIT = 10**8


def carleman_dimension(d: int, order: int) -> int:
    """Total lifted dimension sum_{k=1}^{order} d^k."""
    if d < 1 or order < 1:
        raise ValueError("d and order must be positive")
    total = sum(d**k for k in range(1, order + 1))
    if total > DIM_LIMIT:
        raise OverflowGuardError(f"lifted dimension {total} exceeds guard")
    return total


class ConstantDriveError(ValueError):
    """The lift requires a zero constant term in the source system."""


@dataclass
class CarlemanOperator:
    """Matrix-free block upper-triangular lifted generator."""

    dim: int
    order: int
    degrees: np.ndarray       # tensor degrees present, ascending
    offsets: np.ndarray       # block k starts at offsets[k-1], k = 1..order
    total_dim: int
    _rows: list = None        # per-degree entry arrays
    _cols: list = None
    _vals: list = None
    _flats: list = None       # per-degree dense (d, d^k) flattenings

    def block_slice(self, k: int) -> slice:
        if not 1 <= k <= self.order:
            raise DimensionError(f"block {k} out of range")
        start = int(self.offsets[k - 1])
        return slice(start, start + self.dim**k)

    def apply(self, g: np.ndarray) -> np.ndarray:
        g = np.ascontiguousarray(g, dtype=np.complex128)
        if g.shape != (self.total_dim,):
            raise DimensionError("lifted vector has wrong length")
        out = np.zeros(self.total_dim, dtype=np.complex128)
        if USE_COMPILED:
            _carleman_cy.apply_blocks_sparse(
                out, g, self.dim, self.order, self.offsets, self.degrees,
                self._rows, self._cols, self._vals)
        else:
            _carleman_py.apply_blocks(
                out, g, self.dim, self.order, self.offsets,
                [int(k) for k in self.degrees], self._flats)
        return out

    def dense(self) -> np.ndarray:
        """Dense materialization (test oracle only; guarded by size)."""
        if self.total_dim > 2000:
            raise OverflowGuardError("dense oracle limited to small lifts")
        eye = np.eye(self.total_dim, dtype=np.complex128)
        return np.column_stack([self.apply(eye[:, j])
                                for j in range(self.total_dim)])


@dataclass
class LiftedState:
    """Stacked monomial blocks g = [g^(1), ..., g^(order)]."""

    dim: int
    order: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != (carleman_dimension(self.dim, self.order),):
            raise DimensionError("lifted data has wrong length")

    def block(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.order:
            raise DimensionError(f"block {k} out of range")
        start = sum(self.dim**j for j in range(1, k))
        return self.data[start:start + self.dim**k]


def build_carleman(sys: PolySystem, order: int) -> CarlemanOperator:
    """Lifted generator of a polynomial system with no constant term.

    Tensors of degree above the truncation order are ignored; missing degrees
    simply contribute no blocks.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if sys.has_constant_term():
        raise ConstantDriveError(
            "constant drive is not supported by the monomial lift")
    d = sys.dim
    total = carleman_dimension(d, order)
    offsets = np.zeros(order, dtype=np.int64)
    for k in range(2, order + 1):
        offsets[k - 1] = offsets[k - 2] + d**(k - 1)

    degrees, rows, cols, vals, flats = [], [], [], [], []
    for k in range(1, min(sys.max_degree, order) + 1):
        t = sys.tensor(k)
        if t is None or t.nnz == 0:
            continue
        r, c, v = t.arrays()
        degrees.append(k)
        rows.append(np.ascontiguousarray(r))
        cols.append(np.ascontiguousarray(c))
        vals.append(np.ascontiguousarray(v))
        flats.append(t.dense_flat())
    return CarlemanOperator(
        dim=d, order=order, degrees=np.array(degrees, dtype=np.int64),
        offsets=offsets, total_dim=total, _rows=rows, _cols=cols,
        _vals=vals, _flats=flats)


def apply_carleman(op: CarlemanOperator, g: LiftedState) -> LiftedState:
    if (g.dim, g.order) != (op.dim, op.order):
        raise DimensionError("operator/state dims mismatch")
    return LiftedState(op.dim, op.order, op.apply(g.data))


def initial_lift(z0: np.ndarray, order: int) -> LiftedState:
    """g(0) = [z0, z0^(tensor 2), ..., z0^(tensor order)]."""
    z0 = np.asarray(z0, dtype=np.complex128)
    d = z0.size
    total = carleman_dimension(d, order)
    data = np.empty(total, dtype=np.complex128)
    start = 0
    for k in range(1, order + 1):
        data[start:start + d**k] = kron_power(z0, k)
        start += d**k
    return LiftedState(d, order, data)


def evolve_lifted(op: CarlemanOperator, g0: LiftedState, t_end: float,
                  tol: float, sample_times=None):
    """Adaptive integration of dg/dt = C g using the matrix-free apply.

    Returns (Trajectory over lifted vectors, list of LiftedState samples).
    """
    if (g0.dim, g0.order) != (op.dim, op.order):
        raise DimensionError("operator/state dims mismatch")
    traj = integrate_rhs(lambda t, g: op.apply(g), g0.data, t_end, tol,
                         sample_times)
    states = [LiftedState(op.dim, op.order, row) for row in traj.states]
    return traj, states


def truncation_error(reference: Trajectory, lifted: Trajectory,
                     dim: int, order: int, back_map=None):
    """Per-sample distance between the reference flow and back-mapped block 1.

    Both trajectories must share a time grid up to the point where either
    diverged; a divergent comparison reports max = +inf.
    """
    n = min(reference.times.size, lifted.times.size)
    if not np.allclose(reference.times[:n], lifted.times[:n], atol=1e-12):
        raise DimensionError("trajectories sampled on different time grids")
    profile = np.empty(n)
    for s in range(n):
        g1 = LiftedState(dim, order, lifted.states[s]).block(1)
        mapped = g1 if back_map is None else back_map(g1)
        profile[s] = np.linalg.norm(reference.states[s, :dim] - mapped)
    max_err = float(np.max(profile)) if n else 0.0
    if reference.diverged or lifted.diverged or \
            n < max(reference.times.size, lifted.times.size):
        max_err = np.inf
    return profile, max_err
