"""Open free-fermion dynamics at the covariance-matrix level.

A system of N modes is specified by a real antisymmetric 2N x 2N matrix h
(Hamiltonian coefficients) and complex length-2N jump vectors l_mu.  The
covariance matrix Gamma obeys the driven linear equation

    dGamma/dt = B Gamma + Gamma B^T + Y,   B = h - X,

with X = 2 sum_mu Re(l_mu^dag l_mu) and Y = -4 sum_mu Im(l_mu^dag l_mu).
The same dynamics in vectorized form uses BB = kron(B, I) + kron(I, B)
(row-major vec convention).  An exact small-N density-matrix oracle built
from Jordan-Wigner Majorana operators validates the derivation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import schur

from .polyflow import DimensionError, integrate_rhs

ANTISYM_TOL = 1e-12
ORACLE_MAX_N = 4
BIGB_MAX_N = 64


class SecularError(ValueError):
    """[h, X] != 0: decay rates are not well defined mode-pair sums."""


class GaplessError(ValueError):
    """The dissipative part has a zero mode; no unique steady state."""


@dataclass
class FermionSystem:
    """(h, {l_mu}) with the derived dissipation matrices."""

    N: int
    h: np.ndarray
    jumps: list
    X: np.ndarray = field(init=False)
    Y: np.ndarray = field(init=False)
    B: np.ndarray = field(init=False)

    def __post_init__(self):
        n2 = 2 * self.N
        self.h = np.asarray(self.h, dtype=float)
        if self.h.shape != (n2, n2):
            raise DimensionError("h must be 2N x 2N")
        if np.max(np.abs(self.h + self.h.T)) > ANTISYM_TOL:
            raise ValueError("h must be antisymmetric")
        self.jumps = [np.asarray(l, dtype=complex).reshape(n2)
                      for l in self.jumps]
        X = np.zeros((n2, n2))
        Y = np.zeros((n2, n2))
        for l in self.jumps:
            outer = np.outer(l.conj(), l)
            X += 2.0 * outer.real
            Y += -4.0 * outer.imag
        self.X, self.Y, self.B = X, Y, self.h - X

    def bigB(self) -> np.ndarray:
        """kron(B, I) + kron(I, B); dense, limited to moderate N."""
        if self.N > BIGB_MAX_N:
            raise DimensionError("vectorized generator limited to N <= 64")
        eye = np.eye(2 * self.N)
        return np.kron(self.B, eye) + np.kron(eye, self.B)


def assemble(h, jumps) -> FermionSystem:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] % 2:
        raise DimensionError("h must be square with even size")
    return FermionSystem(h.shape[0] // 2, h, list(jumps))


@dataclass
class CovarianceState:
    """Real antisymmetric second-moment matrix."""

    Gamma: np.ndarray

    def __post_init__(self):
        self.Gamma = np.asarray(self.Gamma, dtype=float)
        n = self.Gamma.shape[0]
        if self.Gamma.shape != (n, n) or n % 2:
            raise DimensionError("Gamma must be square with even size")
        if np.max(np.abs(self.Gamma + self.Gamma.T)) > 1e-10:
            raise ValueError("Gamma must be antisymmetric")

    def is_physical(self, tol: float = 1e-8) -> bool:
        """Eigenvalues of i*Gamma within [-1, 1] (opt-in check)."""
        eigs = np.linalg.eigvalsh(1j * self.Gamma)
        return bool(np.all(np.abs(eigs) <= 1.0 + tol))


def random_antisymmetric(n2: int, rng) -> np.ndarray:
    M = rng.normal(size=(n2, n2))
    return (M - M.T) / 2.0


def evolve_covariance(sys: FermionSystem, state: CovarianceState,
                      t_end: float, tol: float = 1e-10,
                      vectorized: bool = False, sample_times=None):
    """Integrate the covariance ODE; returns (final state, times, Gamma list).

    The matrix path evaluates B Gamma + Gamma B^T + Y directly; the
    vectorized path uses the Kronecker-sum generator.  Results are
    re-antisymmetrized at each sample.
    """
    n2 = 2 * sys.N
    if state.Gamma.shape != (n2, n2):
        raise DimensionError("state size does not match system")
    if vectorized:
        BB = sys.bigB()
        vy = sys.Y.reshape(-1)

        def rhs(t, g):
            return BB @ g + vy
    else:
        def rhs(t, g):
            G = g.reshape(n2, n2)
            return (sys.B @ G + G @ sys.B.T + sys.Y).reshape(-1)

    traj = integrate_rhs(rhs, state.Gamma.reshape(-1).astype(complex),
                         t_end, tol, sample_times)
    gammas = []
    for row in traj.states:
        G = row.real.reshape(n2, n2)
        gammas.append(CovarianceState((G - G.T) / 2.0))
    return gammas[-1], traj.times, gammas


# ---------------------------------------------------------------------------
# exact density-matrix oracle

@lru_cache(maxsize=8)
def majorana_operators(N: int):
    """Jordan-Wigner Majoranas: c_{2k-1} = Z^(k-1) X I..., c_{2k} = Z^(k-1) Y I...

    The anticommutation {c_i, c_j} = 2 delta_ij is asserted exactly.
    """
    if N > ORACLE_MAX_N:
        raise DimensionError(f"oracle limited to N <= {ORACLE_MAX_N}")
    I2 = np.eye(2, dtype=complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    cs = []
    for k in range(N):
        for tail in (sx, sy):
            op = np.eye(1, dtype=complex)
            for pos in range(N):
                factor = sz if pos < k else (tail if pos == k else I2)
                op = np.kron(op, factor)
            cs.append(op)
    dim = 2**N
    for i, ci in enumerate(cs):
        for j, cj in enumerate(cs):
            anti = ci @ cj + cj @ ci
            target = 2.0 * np.eye(dim) if i == j else np.zeros((dim, dim))
            assert np.array_equal(anti, target) or \
                np.max(np.abs(anti - target)) < 1e-13
    return tuple(cs)


def covariance_from_density(rho: np.ndarray, N: int) -> CovarianceState:
    """Gamma_kl = (i/2) Tr(rho [c_k, c_l])."""
    cs = majorana_operators(N)
    n2 = 2 * N
    G = np.zeros((n2, n2))
    for k in range(n2):
        for l in range(k + 1, n2):
            val = 0.5j * np.trace(rho @ (cs[k] @ cs[l] - cs[l] @ cs[k]))
            G[k, l] = val.real
            G[l, k] = -val.real
    return CovarianceState(G)


def exact_lindblad_oracle(h, jumps, rho0: np.ndarray, t_end: float,
                          tol: float = 1e-12) -> CovarianceState:
    """Integrate the full master equation and read Gamma off rho(t)."""
    sys = assemble(h, jumps)
    if sys.N > ORACLE_MAX_N:
        raise DimensionError(f"oracle limited to N <= {ORACLE_MAX_N}")
    rho0 = np.asarray(rho0, dtype=complex)
    dim = 2**sys.N
    if rho0.shape != (dim, dim):
        raise DimensionError("rho0 has wrong shape")
    if np.max(np.abs(rho0 - rho0.conj().T)) > 1e-10 or \
            abs(np.trace(rho0) - 1.0) > 1e-10 or \
            np.min(np.linalg.eigvalsh((rho0 + rho0.conj().T) / 2)) < -1e-10:
        raise ValueError("rho0 must be a trace-1 PSD density matrix")

    cs = majorana_operators(sys.N)
    H = np.zeros((dim, dim), dtype=complex)
    for i in range(2 * sys.N):
        for j in range(2 * sys.N):
            if sys.h[i, j] != 0.0:
                H += 0.25j * sys.h[i, j] * (cs[i] @ cs[j])
    Ls = [sum(l[i] * cs[i] for i in range(2 * sys.N)) for l in sys.jumps]
    LdL = [L.conj().T @ L for L in Ls]

    def rhs(t, flat):
        rho = flat.reshape(dim, dim)
        out = -1j * (H @ rho - rho @ H)
        for L, ldl in zip(Ls, LdL):
            out += L @ rho @ L.conj().T - 0.5 * (ldl @ rho + rho @ ldl)
        return out.reshape(-1)

    traj = integrate_rhs(rhs, rho0.reshape(-1), t_end, tol)
    rho_t = traj.final.reshape(dim, dim)
    return covariance_from_density(rho_t, sys.N)


def random_instance(N: int, rng, n_jumps: int = 2):
    """Random instance: antisymmetric h, scaled jump vectors, pure rho0."""
    n2 = 2 * N
    h = random_antisymmetric(n2, rng)
    jumps = [0.5 * (rng.normal(size=n2) + 1j * rng.normal(size=n2))
             for _ in range(n_jumps)]
    dim = 2**N
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    rho0 = np.outer(psi, psi.conj())
    return h, jumps, rho0


def oracle_deviation(N: int, seed: int, t_end: float,
                     tol: float = 1e-10) -> float:
    """Max elementwise gap between the covariance ODE and the exact oracle."""
    rng = np.random.default_rng(seed)
    h, jumps, rho0 = random_instance(N, rng)
    sys = FermionSystem(N, h, jumps)
    g0 = covariance_from_density(rho0, N)
    final, _, _ = evolve_covariance(sys, g0, t_end, tol)
    oracle = exact_lindblad_oracle(h, jumps, rho0, t_end)
    return float(np.max(np.abs(final.Gamma - oracle.Gamma)))


# ---------------------------------------------------------------------------
# observables

def energy(h: np.ndarray, state: CovarianceState) -> float:
    """E = -Tr[h Gamma] / 4."""
    return float(-np.trace(np.asarray(h) @ state.Gamma).real / 4.0)


def heat_per_fermion(sys: FermionSystem, state: CovarianceState,
                     t_end: float, tol: float = 1e-10) -> float:
    """Dissipated heat per mode: (E(0) - E(t)) / N."""
    final, _, _ = evolve_covariance(sys, state, t_end, tol)
    return (energy(sys.h, state) - energy(sys.h, final)) / sys.N


# ---------------------------------------------------------------------------
# spectrum and steady state

@dataclass
class DecaySpectrum:
    """Pairwise decay rates nu_k + nu_l with spectral weights |a_kl(0)|^2."""

    rates: np.ndarray
    weights: np.ndarray
    pairs: list
    gap: float
    nus: np.ndarray


def _normal_eigenbasis(sys: FermionSystem):
    """Orthonormal eigenbasis of B; requires the secular condition [h, X] = 0."""
    comm = sys.h @ sys.X - sys.X @ sys.h
    if np.max(np.abs(comm)) > 1e-10:
        raise SecularError("h and X do not commute; B is not normal")
    T, Q = schur(sys.B.astype(complex), output="complex")
    # normal matrix: the Schur form is diagonal and Q is an orthonormal basis
    lam = np.diag(T)
    return lam, Q


def decay_spectrum(sys: FermionSystem, state: CovarianceState) -> DecaySpectrum:
    lam, Q = _normal_eigenbasis(sys)
    nus = -lam.real
    if np.min(nus) < -1e-12:
        raise ValueError("growing mode: decay rates must be nonnegative")
    # a_kl = <q_k (x) q_l | vec(Gamma0)> = (Q^dag Gamma0 conj(Q))_{kl}
    a = Q.conj().T @ state.Gamma @ Q.conj()
    n2 = 2 * sys.N
    rates, weights, pairs = [], [], []
    for k in range(n2):
        for l in range(n2):
            rates.append(nus[k] + nus[l])
            weights.append(abs(a[k, l])**2)
            pairs.append((k, l))
    order = np.argsort(weights)[::-1]
    rates = np.array(rates)[order]
    weights = np.array(weights)[order]
    pairs = [pairs[i] for i in order]
    gap = min(nus[k] + nus[l] for k in range(n2) for l in range(k + 1, n2))
    return DecaySpectrum(rates, weights, pairs, float(gap), nus)


def lindblad_gap(sys: FermionSystem) -> float:
    """Smallest decay rate on the antisymmetric (covariance) subspace."""
    lam, _ = _normal_eigenbasis(sys)
    nus = np.sort(-lam.real)
    if nus[0] <= 1e-12:
        raise GaplessError("non-dissipative mode present")
    return float(nus[0] + nus[1])


def steady_state(sys: FermionSystem) -> CovarianceState:
    """Solve B Gamma + Gamma B^T = -Y through the vectorized linear system."""
    n2 = 2 * sys.N
    BB = sys.bigB()
    try:
        g = np.linalg.solve(BB, -sys.Y.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise GaplessError(f"singular vectorized generator: {exc}") from exc
    G = g.reshape(n2, n2)
    G = (G - G.T) / 2.0
    resid = np.max(np.abs(sys.B @ G + G @ sys.B.T + sys.Y))
    if resid > 1e-10:
        raise GaplessError(f"Lyapunov residual {resid} too large")
    return CovarianceState(G)


# ---------------------------------------------------------------------------
# structured instance

def chain_example(N: int, hopping: float, boundary_rates=(0.0, 0.0)):
    """Nearest-neighbor hopping chain with jump vectors on the end sites."""
    if N < 2:
        raise ValueError("chain needs N >= 2")
    n2 = 2 * N
    h = np.zeros((n2, n2))
    for s in range(N - 1):
        # J (a_s^dag a_{s+1} + h.c.) in Majorana pairs (2s, 2s+1), (2s+2, 2s+3)
        h[2 * s, 2 * s + 3] = hopping
        h[2 * s + 3, 2 * s] = -hopping
        h[2 * s + 1, 2 * s + 2] = -hopping
        h[2 * s + 2, 2 * s + 1] = hopping
    jumps = []
    gamma_l, gamma_r = boundary_rates
    if gamma_l > 0:
        l = np.zeros(n2, dtype=complex)
        l[0], l[1] = 0.5 * np.sqrt(gamma_l), 0.5j * np.sqrt(gamma_l)
        jumps.append(l)
    if gamma_r > 0:
        l = np.zeros(n2, dtype=complex)
        l[n2 - 2] = 0.5 * np.sqrt(gamma_r)
        l[n2 - 1] = 0.5j * np.sqrt(gamma_r)
        jumps.append(l)
    return h, jumps


def commuting_example(N: int, omegas, gammas):
    """Per-mode precession h and per-mode loss jumps, built so [h, X] = 0.

    Each mode contributes a 2x2 antisymmetric h block omega_k [[0,1],[-1,0]]
    and a jump (sqrt(gamma_k)/2)(e_{2k} + i e_{2k+1}) whose X block is
    (gamma_k/2) I, commuting with the h block.
    """
    omegas = np.asarray(omegas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    if omegas.size != N or gammas.size != N:
        raise DimensionError("need one omega and one gamma per mode")
    n2 = 2 * N
    h = np.zeros((n2, n2))
    jumps = []
    for k in range(N):
        h[2 * k, 2 * k + 1] = omegas[k]
        h[2 * k + 1, 2 * k] = -omegas[k]
        if gammas[k] > 0:
            l = np.zeros(n2, dtype=complex)
            l[2 * k] = 0.5 * np.sqrt(gammas[k])
            l[2 * k + 1] = 0.5j * np.sqrt(gammas[k])
            jumps.append(l)
    return h, jumps


# ---------------------------------------------------------------------------
# serialization

def system_to_json(sys: FermionSystem) -> str:
    entries = [[i, j, sys.h[i, j]]
               for i in range(2 * sys.N) for j in range(i + 1, 2 * sys.N)
               if sys.h[i, j] != 0.0]
    jumps = [[[v.real, v.imag] for v in l] for l in sys.jumps]
    return json.dumps({"N": sys.N, "h": entries, "jumps": jumps})


def system_from_json(text: str) -> FermionSystem:
    data = json.loads(text)
    N = int(data["N"])
    h = np.zeros((2 * N, 2 * N))
    for i, j, val in data["h"]:
        if not i < j:
            raise ValueError("h entries must have i < j")
        h[i, j] = val
        h[j, i] = -val
    jumps = [np.array([complex(re, im) for re, im in l])
             for l in data["jumps"]]
    return FermionSystem(N, h, jumps)


def covariance_to_csv(state: CovarianceState, path) -> None:
    n = state.Gamma.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        for i in range(n):
            for j in range(i + 1, n):
                w.writerow([i, j, f"{state.Gamma[i, j]:.17g}"])
