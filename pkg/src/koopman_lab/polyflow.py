"""Polynomial vector fields, reference integration, and the matrix norms
used by every other module.

A system dx/dt = sum_k F_k x^(tensor k) is stored as a list of sparse
coefficient tensors.  The degree-0 tensor is a plain vector (constant drive),
degree 1 a matrix, and degree k maps the k-fold Kronecker power of x back to
d components.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

DIVERGENCE_NORM = 1e9
KRON_SIZE_LIMIT = 10**8


class DimensionError(ValueError):
    """Shape or dimension mismatch between operands."""


class OverflowGuardError(ValueError):
    """A requested tensor-power object would exceed the size guard."""


class StepUnderflowError(RuntimeError):
    """The adaptive integrator could not take a step at the requested tolerance."""


@dataclass
class SparseTensor:
    """Degree-k coefficient tensor held as (row, multi-index, value) entries.

    Entries are kept keyed by (row, multi-index); inserting a duplicate key
    sums the values.  Iteration order is lexicographic in the key, which makes
    serialization deterministic.
    """

    degree: int
    dim: int
    _entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.dim <= 0:
            raise ValueError("dim must be positive")

    def add(self, row: int, cols: tuple, value: complex) -> None:
        cols = tuple(int(c) for c in cols)
        if len(cols) != self.degree:
            raise DimensionError(
                f"multi-index length {len(cols)} != degree {self.degree}")
        if not 0 <= row < self.dim:
            raise DimensionError(f"row {row} out of range for dim {self.dim}")
        for c in cols:
            if not 0 <= c < self.dim:
                raise DimensionError(f"column {c} out of range for dim {self.dim}")
        key = (int(row), cols)
        self._entries[key] = self._entries.get(key, 0.0) + complex(value)

    def entries(self):
        """Sorted (row, cols, value) triples, zero-valued entries included."""
        for key in sorted(self._entries):
            yield key[0], key[1], self._entries[key]

    @property
    def nnz(self) -> int:
        return len(self._entries)

    def col_flat(self, cols: tuple) -> int:
        """Row-major flattening of a multi-index (first index most significant)."""
        idx = 0
        for c in cols:
            idx = idx * self.dim + c
        return idx

    def arrays(self):
        """Entry data as (rows, flat_cols, values) numpy arrays."""
        keys = sorted(self._entries)
        rows = np.array([k[0] for k in keys], dtype=np.int64)
        cols = np.array([self.col_flat(k[1]) for k in keys], dtype=np.int64)
        vals = np.array([self._entries[k] for k in keys], dtype=np.complex128)
        return rows, cols, vals

    def dense_flat(self) -> np.ndarray:
        """Dense (d, d^k) flattening of the tensor."""
        ncols = self.dim**self.degree
        if self.dim * ncols > KRON_SIZE_LIMIT:
            raise OverflowGuardError("dense flattening exceeds size guard")
        out = np.zeros((self.dim, ncols), dtype=np.complex128)
        for row, cols, val in self.entries():
            out[row, self.col_flat(cols)] += val
        return out

    @classmethod
    def from_dense_flat(cls, degree: int, mat: np.ndarray) -> "SparseTensor":
        mat = np.asarray(mat, dtype=np.complex128)
        d = mat.shape[0]
        if mat.shape[1] != d**degree:
            raise DimensionError("flattened shape inconsistent with degree")
        t = cls(degree, d)
        for row in range(d):
            for flat in np.nonzero(mat[row])[0]:
                cols = []
                rem = int(flat)
                for _ in range(degree):
                    cols.append(rem % d)
                    rem //= d
                t.add(row, tuple(reversed(cols)), mat[row, flat])
        return t


@dataclass
class PolySystem:
    """dx/dt = sum_k F_k x^(tensor k), tensors indexed by degree 0..N."""

    dim: int
    tensors: list  # SparseTensor per degree; index = degree

    def __post_init__(self):
        for k, t in enumerate(self.tensors):
            if t is None:
                continue
            if t.dim != self.dim or t.degree != k:
                raise DimensionError(
                    f"tensor at slot {k} has degree {t.degree}, dim {t.dim}")

    @property
    def max_degree(self) -> int:
        return len(self.tensors) - 1

    def tensor(self, degree: int):
        if degree < len(self.tensors):
            return self.tensors[degree]
        return None

    def has_constant_term(self) -> bool:
        t0 = self.tensor(0)
        return t0 is not None and any(abs(v) > 0 for _, _, v in t0.entries())


@dataclass
class Trajectory:
    """Sampled solution with divergence bookkeeping."""

    times: np.ndarray
    states: np.ndarray  # shape (len(times), dim), complex
    diverged: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=np.complex128)
        if self.times.ndim != 1 or self.states.shape[0] != self.times.size:
            raise DimensionError("times/states length mismatch")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def eval_rhs(sys: PolySystem, x: np.ndarray) -> np.ndarray:
    """Evaluate sum_k F_k x^(tensor k) without materializing x^(tensor k)."""
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (sys.dim,):
        raise DimensionError(f"state length {x.shape} != dim {sys.dim}")
    out = np.zeros(sys.dim, dtype=np.complex128)
    for k, t in enumerate(sys.tensors):
        if t is None:
            continue
        for row, cols, val in t.entries():
            term = val
            for c in cols:
                term = term * x[c]
            out[row] += term
    return out


def _sampled_rhs(sys: PolySystem):
    """Vectorized right-hand side closure for the integrator."""
    plan = []
    for k, t in enumerate(sys.tensors):
        if t is None or t.nnz == 0:
            continue
        rows, _, vals = t.arrays()
        col_idx = np.array([list(c) for _, c, _ in t.entries()],
                           dtype=np.int64).reshape(t.nnz, k)
        plan.append((k, rows, col_idx, vals))
    dim = sys.dim

    def rhs(t, x):
        out = np.zeros(dim, dtype=np.complex128)
        for k, rows, col_idx, vals in plan:
            terms = vals.copy()
            for m in range(k):
                terms *= x[col_idx[:, m]]
            np.add.at(out, rows, terms)
        return out

    return rhs


def integrate_reference(sys: PolySystem, x0: np.ndarray, t_end: float,
                        tol: float, sample_times=None) -> Trajectory:
    """Adaptive embedded Runge-Kutta integration of the polynomial system.

    Divergence (state norm above 1e9) is recorded on the trajectory, not
    raised; the samples past the divergence time are dropped.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    x0 = np.asarray(x0, dtype=np.complex128)
    if x0.shape != (sys.dim,):
        raise DimensionError("initial state has wrong length")
    return integrate_rhs(_sampled_rhs(sys), x0, t_end, tol, sample_times)


def integrate_rhs(rhs, x0: np.ndarray, t_end: float, tol: float,
                  sample_times=None) -> Trajectory:
    """Shared adaptive integrator: DOP853 pair with mixed abs/rel control."""
    x0 = np.asarray(x0, dtype=np.complex128)
    if t_end == 0:
        return Trajectory(np.array([0.0]), x0[None, :])
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, 129)
    sample_times = np.asarray(sample_times, dtype=float)

    def blow_up(t, y):
        return np.linalg.norm(y) - DIVERGENCE_NORM

    blow_up.terminal = True
    blow_up.direction = 1

    sol = solve_ivp(rhs, (0.0, t_end), x0, method="DOP853", rtol=tol,
                    atol=tol, t_eval=sample_times, events=blow_up,
                    dense_output=False)
    diverged = sol.status == 1  # terminated by the norm event
    if sol.status == -1:
        if "step size" in sol.message.lower() or "required" in sol.message.lower():
            raise StepUnderflowError(sol.message)
        raise RuntimeError(sol.message)
    times = sol.t
    states = sol.y.T
    if times.size == 0 or times[0] != 0.0:
        times = np.concatenate(([0.0], times))
        states = np.vstack([x0, states])
    return Trajectory(times, states, diverged=diverged)


def log_norm(M: np.ndarray) -> float:
    """Logarithmic norm: largest eigenvalue of the Hermitian part."""
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError("log_norm requires a square matrix")
    return float(np.linalg.eigvalsh((M + M.conj().T) / 2.0)[-1])


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value."""
    M = np.asarray(M, dtype=np.complex128)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def frobenius_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(M)))


def kron_power(v: np.ndarray, k: int) -> np.ndarray:
    """k-fold Kronecker power of v, row-major multi-index order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    v = np.asarray(v, dtype=np.complex128)
    d = v.size
    if d**k > KRON_SIZE_LIMIT:
        raise OverflowGuardError(f"d^k = {d}^{k} exceeds size guard")
    out = v
    for _ in range(k - 1):
        out = np.kron(out, v)
    return out


class NonDissipativeError(ValueError):
    """The linear part is not strictly dissipative (log-norm >= 0)."""


def quadratic_r_number(F0, F1, F2: SparseTensor, z0) -> float:
    """Convergence number (|F2||z0| + |F0|/|z0|) / |mu(F1)| of a quadratic system.

    |F2| is the spectral norm of the d x d^2 flattening; mu is the log-norm.
    """
    z0 = np.asarray(z0, dtype=np.complex128)
    nz0 = float(np.linalg.norm(z0))
    if nz0 == 0:
        raise ValueError("initial state must be nonzero")
    mu = log_norm(np.asarray(F1, dtype=np.complex128))
    if mu >= 0:
        raise NonDissipativeError(f"log-norm of linear part is {mu} >= 0")
    nF0 = float(np.linalg.norm(np.asarray(F0, dtype=np.complex128))) \
        if F0 is not None else 0.0
    nF2 = spectral_norm(F2.dense_flat()) if F2 is not None else 0.0
    return (nF2 * nz0 + nF0 / nz0) / abs(mu)


# ---------------------------------------------------------------------------
# serialization

def system_to_json(sys: PolySystem) -> str:
    tensors = []
    for k, t in enumerate(sys.tensors):
        if t is None:
            continue
        tensors.append({
            "degree": k,
            "entries": [[row, list(cols), val.real, val.imag]
                        for row, cols, val in t.entries()],
        })
    return json.dumps({"dim": sys.dim, "tensors": tensors})


def system_from_json(text: str) -> PolySystem:
    data = json.loads(text)
    dim = int(data["dim"])
    max_deg = max((int(t["degree"]) for t in data["tensors"]), default=0)
    tensors = [SparseTensor(k, dim) for k in range(max_deg + 1)]
    for tdata in data["tensors"]:
        k = int(tdata["degree"])
        for row, cols, re, im in tdata["entries"]:
            tensors[k].add(int(row), tuple(cols), complex(re, im))
    return PolySystem(dim, tensors)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    dim = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["t"]
        for i in range(dim):
            header += [f"re_{i}", f"im_{i}"]
        w.writerow(header)
        for t, x in zip(traj.times, traj.states):
            row = [f"{t:.17g}"]
            for c in x:
                row += [f"{c.real:.17g}", f"{c.imag:.17g}"]
            w.writerow(row)
