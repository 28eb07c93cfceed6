"""Matrix Sturm-Liouville problems with separated self-adjoint end conditions.

Problem: ``(C0^{-1} q')' + (-D + lam E) q = 0`` on ``[0, t]`` with

    beta0 q(0) + alpha0 p(0) = 0,     delta1 q(t) + gamma1 p(t) = 0,

``p = C0^{-1} q'``.  After normalization (``alpha0 alpha0^T + beta0 beta0^T = I``,
``gamma1 = I``, ``delta = gamma1^{-1} delta1``) the solutions satisfying the
left condition are ``(q; p) = Y(tau) c`` with ``Y = Phi0 [alpha0^T; -beta0^T]``.
Writing ``Y = (U; W)``, the pair

    Q2 = (delta U + W)^T,     Q1 = -U^T

has ``det Q2(t, lam) = 0`` exactly at eigenvalues.  Its polar angle ``phi(t, lam)``
decreases strictly in ``lam``; eigenvalue ``lam_{j,k}`` is where the j-th
sorted eigen-angle reaches ``(l_j - k - 1/2) pi``, ``l_j`` being the integer
limit as ``lam -> -inf``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import sqrtm
from scipy.optimize import brentq

from .angles import (
    AngleTrack,
    PairPath,
    count_singularities,
    lift_track,
    unitary_reduction,
    wrap,
)
from .errors import BracketError, ConfigError, NumericalError
from .flow import (
    BlockSolution,
    CoefficientModel,
    MatrixFunction,
    cumulative_quadrature,
    integrate_block,
    integrate_fundamental,
    second_case_blocks,
)
from .symplectic import COND_MAX, blocks, tr

HALF_PI = 0.5 * math.pi


def _sym_err(m: np.ndarray) -> float:
    return float(np.linalg.norm(m - m.T)) / max(1.0, float(np.linalg.norm(m)))


@dataclass(frozen=True)
class SLProblem:
    C0: MatrixFunction
    D: MatrixFunction
    E: MatrixFunction
    alpha0: np.ndarray
    beta0: np.ndarray
    gamma1: np.ndarray
    delta1: np.ndarray
    t: float

    def __post_init__(self):
        n = self.C0.n
        for name in ("alpha0", "beta0", "gamma1", "delta1"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if m.shape != (n, n):
                raise ConfigError(f"{name} must be {n} x {n}")
            object.__setattr__(self, name, m)
        if self.D.n != n or self.E.n != n:
            raise ConfigError("C0, D, E must have the same order")
        if not self.t > 0:
            raise ConfigError("horizon t must be positive")

    @property
    def n(self) -> int:
        return self.C0.n

    def validate(self, samples: int = 65, tol: float = 1e-9) -> None:
        tau = np.linspace(0.0, self.t, samples)
        for name, f in (("C0", self.C0), ("E", self.E)):
            v = f(tau)
            if np.max(np.abs(v - tr(v))) > tol * max(1.0, np.max(np.abs(v))):
                raise ConfigError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(v)) <= 0:
                raise ConfigError(f"{name} must be positive definite on [0, t]")
        d = self.D(tau)
        if np.max(np.abs(d - tr(d))) > tol * max(1.0, np.max(np.abs(d))):
            raise ConfigError("D must be symmetric")
        a, b, g, dl = self.alpha0, self.beta0, self.gamma1, self.delta1
        if _sym_err(a @ b.T) > tol:
            raise ConfigError("alpha0 beta0^T must be symmetric")
        if _sym_err(g @ dl.T) > tol:
            raise ConfigError("gamma1 delta1^T must be symmetric")
        if np.min(np.linalg.eigvalsh(a @ a.T + b @ b.T)) <= tol:
            raise ConfigError("alpha0 alpha0^T + beta0 beta0^T must be positive definite")
        if np.linalg.cond(g) > COND_MAX:
            raise ConfigError("gamma1 is singular (Dirichlet-type condition at t is not supported)")

    @classmethod
    def scalar(cls, alpha0: float, beta0: float, gamma1: float, delta1: float, t: float,
               c: float = 1.0, d: float = 0.0, e: float = 1.0) -> "SLProblem":
        m = lambda x: MatrixFunction.constant([[x]])
        return cls(m(c), m(d), m(e), [[alpha0]], [[beta0]], [[gamma1]], [[delta1]], t)


@dataclass(frozen=True)
class NormalizedSL:
    C0: MatrixFunction
    D: MatrixFunction
    E: MatrixFunction
    alpha0: np.ndarray
    beta0: np.ndarray
    delta: np.ndarray
    t: float
    model: CoefficientModel = field(repr=False)

    @property
    def n(self) -> int:
        return self.C0.n

    @property
    def Y0(self) -> np.ndarray:
        """Initial block ``[alpha0^T; -beta0^T]`` (orthonormal columns)."""
        return np.vstack([self.alpha0.T, -self.beta0.T])

    def identity_residuals(self) -> dict:
        a, b, d = self.alpha0, self.beta0, self.delta
        return {
            "alpha alpha' + beta beta' = I": float(np.linalg.norm(a @ a.T + b @ b.T - np.eye(self.n))),
            "alpha beta' symmetric": float(np.linalg.norm(a @ b.T - b @ a.T)),
            "delta symmetric": float(np.linalg.norm(d - d.T)),
        }


def normalize(problem: SLProblem, tol: float = 1e-9) -> NormalizedSL:
    problem.validate()
    a, b = problem.alpha0, problem.beta0
    g = a @ a.T + b @ b.T
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    inv_sqrt = v @ np.diag(w**-0.5) @ v.T
    delta = np.linalg.solve(problem.gamma1, problem.delta1)
    if _sym_err(delta) > tol:
        raise ConfigError("gamma1^{-1} delta1 is not symmetric")
    delta = 0.5 * (delta + delta.T)
    model = CoefficientModel.sturm_liouville(problem.C0, problem.D, problem.E)
    return NormalizedSL(problem.C0, problem.D, problem.E, inv_sqrt @ a, inv_sqrt @ b, delta,
                        problem.t, model)


def pair_from_block(Y: np.ndarray, delta: np.ndarray):
    """``(Q2, Q1) = ((delta U + W)^T, -U^T)`` for blocks ``Y = (U; W)`` (batched)."""
    n = Y.shape[-1]
    U, W = Y[..., :n, :], Y[..., n:, :]
    return tr(delta @ U + W), -tr(U)


def assemble_frame(norm: NormalizedSL, lam: float, flow=None, h: float = 1e-3):
    """``(Q2, Q1)`` on the flow grid from the full fundamental solution."""
    flow = flow or integrate_fundamental(norm.model, lam, norm.t, h)
    X, Z = second_case_blocks(flow, norm.alpha0, norm.beta0)
    return X @ norm.delta + Z, -X


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("POLARSTURM_THREADS", "1")))
    except ValueError:
        return 1


def _block_path(blk: BlockSolution, delta: np.ndarray, stride: int = 1) -> PairPath:
    """Pairs along a block solution, starting from every ``stride``-th step.

    The lift refines the coarse grid through dense output where needed.
    """
    grid = blk.tau[::stride]
    if grid[-1] != blk.tau[-1]:
        grid = np.append(grid, blk.tau[-1])
    return PairPath(lambda s: pair_from_block(blk.block_at(s), delta), grid, "tau")


class SLSolver:
    """Cached lambda-sweeps of the polar angle for one normalized problem."""

    def __init__(self, norm: NormalizedSL, h: float = 1e-3, stride: int = 4):
        self.norm = norm
        self.h = h
        self.stride = stride
        self._blocks: dict = {}
        self._tracks: dict = {}
        q2, q1 = pair_from_block(norm.Y0, norm.delta)
        theta = unitary_reduction(q2, q1).theta
        init = 0.5 * theta
        self.phi0 = np.where(init <= -HALF_PI, init + math.pi, init)

    @property
    def n(self) -> int:
        return self.norm.n

    @property
    def t(self) -> float:
        return self.norm.t

    def block(self, lam: float) -> BlockSolution:
        lam = float(lam)
        if lam not in self._blocks:
            self._blocks[lam] = integrate_block(self.norm.model, lam, self.t, self.norm.Y0, self.h)
        return self._blocks[lam]

    def path(self, lam: float) -> PairPath:
        return _block_path(self.block(lam), self.norm.delta, self.stride)

    def tau_track(self, lam: float, crossings: bool = False) -> AngleTrack:
        lam = float(lam)
        key = (lam, crossings)
        if key not in self._tracks:
            self._tracks[key] = lift_track(self.path(lam), self.phi0, crossings=crossings)
        return self._tracks[key]

    def phi_t(self, lam: float) -> np.ndarray:
        """Sorted eigen-angles of ``phi(t, lam)``."""
        return np.sort(self.tau_track(lam).phi[-1])

    def q2_inv_q1_norm(self, lam: float) -> float:
        q2, q1 = pair_from_block(self.block(lam).Y[-1], self.norm.delta)
        if np.linalg.cond(q2) > COND_MAX:
            return float("inf")
        return float(np.linalg.norm(np.linalg.solve(q2, q1), 2))

    def sweep(self, lams: Sequence[float]) -> np.ndarray:
        lams = [float(x) for x in lams]
        todo = [x for x in lams if (x, False) not in self._tracks]
        workers = min(_thread_count(), max(1, len(todo)))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(self._compute_track, todo))
            for lam, track in zip(todo, results):
                self._tracks[(lam, False)] = track
        return np.array([self.phi_t(x) for x in lams])

    def _compute_track(self, lam: float) -> AngleTrack:
        blk = integrate_block(self.norm.model, lam, self.t, self.norm.Y0, self.h)
        return lift_track(_block_path(blk, self.norm.delta, self.stride), self.phi0, crossings=False)


@dataclass
class AngleSurface:
    lams: np.ndarray
    phi_t: np.ndarray
    phi0: np.ndarray
    decreasing: bool
    min_decrease: float


def angle_surface(norm: NormalizedSL, lams: Sequence[float], solver: Optional[SLSolver] = None,
                  h: float = 1e-3, strict: bool = True) -> AngleSurface:
    """``phi(t, lam)`` (sorted) on a lambda grid; checks strict decrease in lambda."""
    lams = np.asarray(sorted(float(x) for x in lams))
    if lams.size == 0:
        raise ConfigError("empty lambda grid")
    solver = solver or SLSolver(norm, h)
    phi = solver.sweep(lams)
    dec = -np.diff(phi, axis=0)
    min_dec = float(np.min(dec)) if dec.size else float("inf")
    ok = bool(np.all(dec > 0))
    if strict and not ok:
        raise NumericalError(f"phi(t, lam) is not strictly decreasing (min decrease {min_dec:.3e})")
    return AngleSurface(lams, phi, solver.phi0.copy(), ok, min_dec)


@dataclass(frozen=True)
class LjEstimate:
    l: np.ndarray
    lam: float
    ratio: float
    phi_t: np.ndarray


def estimate_lj(norm: NormalizedSL, lam_min: float = -10.0, solver: Optional[SLSolver] = None,
                h: float = 1e-3, threshold: float = 0.05, cap: float = 2.0**20) -> LjEstimate:
    """Integer limits ``l_j = round(phi_j(t, lam)/pi)`` for very negative lambda.

    ``lam`` is doubled (made more negative) until ``||Q2^{-1} Q1||(t) < threshold``.
    """
    solver = solver or SLSolver(norm, h)
    lam = float(lam_min) if lam_min < 0 else -1.0
    start = lam
    while True:
        ratio = solver.q2_inv_q1_norm(lam)
        if ratio < threshold:
            phi = solver.phi_t(lam)
            return LjEstimate(np.rint(phi / math.pi).astype(int), lam, ratio, phi)
        if abs(lam) >= abs(start) * cap:
            raise BracketError(
                f"||Q2^-1 Q1|| = {ratio:.3g} still above {threshold} at lambda = {lam:.3g}")
        lam *= 2.0


@dataclass
class SLEigenpair:
    branch: int
    k: int
    eigenvalue: float
    l: int
    level: float
    phi_t: float
    vector: np.ndarray
    zero_count: int
    det_residual: float
    tau: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None

    def summary(self) -> dict:
        return {"branch": self.branch, "k": self.k, "eigenvalue": self.eigenvalue, "l": self.l,
                "zero_count": self.zero_count}


def zero_count(solver: SLSolver, lam: float, branch_value: float) -> int:
    """Interior zeros of ``sin`` along the tau-branch ending at ``branch_value``."""
    track = solver.tau_track(lam)
    j = int(np.argmin(np.abs(track.phi[-1] - branch_value)))
    events = track.find_crossings(offset=0.0)
    t = solver.t
    tol = 1e-9 * max(1.0, t)
    return sum(1 for e in events if e.branch == j and tol < e.param < t - tol)


def solve_eigenvalues(norm: NormalizedSL, branches: Optional[Sequence[int]] = None,
                      ks: Sequence[int] = (0, 1, 2), lam_bounds=(-10.0, 10.0),
                      h: float = 1e-3, solver: Optional[SLSolver] = None,
                      with_eigenfunctions: bool = False, max_expand: int = 40,
                      check_zeros: bool = True) -> list:
    """Eigenvalues ``lam_{j,k}`` for sorted branches ``j`` and oscillation counts ``k``.

    Root finding brackets ``g(lam) = phi_j(t, lam) - (l_j - k - 1/2) pi`` (strictly
    decreasing) and refines it with Brent's method to
    ``|dlam| <= 1e-10 (1 + |lam|)``.  Raises :class:`NumericalError` when the
    interior zero count of the branch differs from ``k``.
    """
    solver = solver or SLSolver(norm, h)
    n = norm.n
    branches = list(range(n)) if branches is None else list(branches)
    for j in branches:
        if not 0 <= j < n:
            raise ConfigError(f"branch index {j} out of range")
    if any(k < 0 for k in ks):
        raise ConfigError("oscillation counts must be non-negative")
    lo_user, hi_user = float(lam_bounds[0]), float(lam_bounds[1])
    if not lo_user < hi_user:
        raise ConfigError("lambda bounds must satisfy lo < hi")
    est = estimate_lj(norm, min(lo_user, -1.0), solver)
    lam_lo = est.lam
    out = []
    for j in branches:
        lo = lam_lo
        hi = max(hi_user, lam_lo + 1.0)
        for k in sorted(ks):
            level = (est.l[j] - k - 0.5) * math.pi
            g = lambda lam: solver.phi_t(lam)[j] - level
            glo = g(lo)
            if glo <= 0:
                raise BracketError(f"lower bound {lo} does not bracket branch {j}, k={k}")
            ghi = g(hi)
            expand = 0
            while ghi > 0:
                expand += 1
                if expand > max_expand:
                    raise BracketError(f"no upper bracket for branch {j}, k={k}")
                lo, glo = hi, ghi
                hi = hi + 2.0 ** expand * max(1.0, abs(hi))
                ghi = g(hi)
            lam = brentq(g, lo, hi, xtol=1e-10, rtol=1e-10, maxiter=200)
            phi = solver.phi_t(lam)
            pair = _eigenpair(solver, j, k, lam, int(est.l[j]), level, phi, check_zeros)
            if with_eigenfunctions:
                attach_eigenfunction(norm, pair, h=h)
            out.append(pair)
            lo = lam
    out.sort(key=lambda p: (p.branch, p.k))
    return out


def _eigenpair(solver: SLSolver, j, k, lam, l, level, phi, check_zeros) -> SLEigenpair:
    track = solver.tau_track(lam)
    branch = int(np.argmin(np.abs(track.phi[-1] - phi[j])))
    vector = track.vectors[-1][:, branch].copy()
    q2, q1 = pair_from_block(solver.block(lam).Y[-1], solver.norm.delta)
    scale = np.linalg.norm(np.hstack([q2, q1]), 2)
    det_res = abs(np.linalg.det(q2 / scale))
    zc = zero_count(solver, lam, phi[j])
    if check_zeros and zc != k:
        raise NumericalError(f"branch {j}: eigenvalue {lam} has {zc} interior zeros, expected {k}")
    return SLEigenpair(j, k, float(lam), l, level, float(phi[j]), vector, zc, float(det_res))


def attach_eigenfunction(norm: NormalizedSL, pair: SLEigenpair, h: float = 1e-3) -> SLEigenpair:
    """Sample ``q(tau) = U(tau) c`` and ``p(tau) = W(tau) c`` for the eigenpair.

    ``(U; W) = Phi0 [alpha0^T; -beta0^T]`` is the family satisfying the left end
    condition and ``c`` spans the kernel of ``Q2(t)^T``, chosen as
    ``r(t)^{-T} e_j`` with ``e_j`` the branch eigenvector so that repeated
    eigenvalues keep their branch identity.  With this choice ``q = Q1^T c``.
    """
    flow = integrate_fundamental(norm.model, pair.eigenvalue, norm.t, h, project=False,
                                 max_residual=1e-3)
    Y = flow.frames @ norm.Y0
    n = norm.n
    U, W = Y[:, :n, :], Y[:, n:, :]
    q2, q1 = pair_from_block(Y[-1], norm.delta)
    red = unitary_reduction(q2, q1)
    phi_m = red.phi_matrix()
    w, o = np.linalg.eigh(phi_m)
    r = ((q2 + 1j * q1) @ (o @ np.diag(np.exp(-1j * w)) @ o.T)).real
    c = np.linalg.solve(r.T, pair.vector)
    c = c / np.linalg.norm(c)
    c = c * np.sign(c[np.argmax(np.abs(c))])
    q = -(U @ c)
    p = -(W @ c)
    pair.tau, pair.q, pair.p = flow.tau, q, p
    return pair


@dataclass(frozen=True)
class ResidualReport:
    left: float
    right: float
    ode: float


def eigenfunction_residuals(norm: NormalizedSL, pair: SLEigenpair) -> ResidualReport:
    """Relative boundary and ODE residuals of a sampled eigenfunction.

    The ODE check uses fourth-order central differences for ``q'`` and ``p'``.
    """
    if pair.q is None:
        raise ConfigError("eigenpair has no sampled eigenfunction")
    tau, q, p = pair.tau, pair.q, pair.p
    scale = max(np.max(np.abs(q)), np.max(np.abs(p)))
    left = norm.beta0 @ q[0] + norm.alpha0 @ p[0]
    right = norm.delta @ q[-1] + p[-1]
    h = tau[1] - tau[0]

    def d5(y):
        return (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)

    inner = tau[2:-2]
    C0 = norm.C0(inner)
    A = norm.model.coefficients(inner, pair.eigenvalue)[0]
    res1 = d5(q) - np.einsum("kij,kj->ki", C0, p[2:-2])
    res2 = d5(p) + np.einsum("kij,kj->ki", A, q[2:-2])
    ode = max(np.max(np.abs(res1)), np.max(np.abs(res2))) / scale
    return ResidualReport(float(np.max(np.abs(left)) / scale), float(np.max(np.abs(right)) / scale),
                          float(ode))


def c2_sl(norm: NormalizedSL, lam: float, h: float = 1e-3, flow=None,
          check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``C2(tau) = -int_0^tau X E X^T`` with ``X = alpha0 Qc^T - beta0 Qs^T = -Q1``.

    Returns ``(tau, C2)``.  With ``check`` the result must be negative definite
    for ``tau > 0`` (:class:`NumericalError` otherwise).
    """
    flow = flow or integrate_fundamental(norm.model, lam, norm.t, h)
    X, _ = second_case_blocks(flow, norm.alpha0, norm.beta0)
    E = norm.E(flow.tau)
    C2 = -cumulative_quadrature(X @ E @ tr(X), flow.tau)
    if check:
        top = np.linalg.eigvalsh(0.5 * (C2[1:] + tr(C2[1:])))[:, -1]
        if np.any(top >= 0):
            raise NumericalError("C2 is not negative definite on (0, t]")
    return flow.tau, C2


def c2_from_sensitivity(norm: NormalizedSL, sens) -> np.ndarray:
    """C2 of the assembled frame from the sensitivity ``M2`` of ``Phi0``.

    For ``Phi = L1 Phi0^T L2`` with lambda-independent ``L1, L2``:
    ``M2 = L1 K^T L1^{-1}`` with ``K = Phi0^{-1} M2_0 Phi0``; C2 is its (1,2) block.
    """
    from .symplectic import _fast_inverse, assemble

    phi = sens.flow.frames
    K = _fast_inverse(phi) @ sens.M2 @ phi
    a, b = norm.alpha0, norm.beta0
    L1 = assemble(a, -b, b, a)
    M2 = L1 @ tr(K) @ L1.T  # L1 is orthogonal
    return blocks(M2)[1]


@dataclass(frozen=True)
class DirectionReport:
    ok: bool
    events: list

    @property
    def violations(self) -> list:
        return [e for e in self.events if e.direction != -1]


def local_direction_checks(norm: NormalizedSL, lam: float, solver: Optional[SLSolver] = None,
                           h: float = 1e-3) -> DirectionReport:
    """Every interior zero of ``sin phi_j(., lam)`` must be a downward crossing."""
    solver = solver or SLSolver(norm, h)
    track = solver.tau_track(lam)
    t = norm.t
    tol = 1e-9 * max(1.0, t)
    events = [e for e in track.find_crossings(offset=0.0) if tol < e.param < t - tol]
    return DirectionReport(all(e.direction == -1 for e in events), events)


def tau_crossing_count(solver: SLSolver, lam: float):
    """Singularities of ``Q2(., lam)`` on ``(0, t)`` (levels ``pi/2 + k pi``)."""
    track = solver.tau_track(lam, crossings=True)
    return count_singularities(track, solver.t, start=0.0)


@dataclass(frozen=True)
class T8Report:
    ok: bool
    max_violation: float
    mus: tuple


def t8_monotonicity_check(m3: CoefficientModel, m4: CoefficientModel, alpha0, beta0,
                          delta3, delta4, t: float,
                          mus: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
                          h: float = 2e-3, tol: float = 1e-7, samples: int = 65) -> T8Report:
    """Sorted ``phi(tau, mu)`` must be nondecreasing in ``mu`` at every grid point.

    ``S0(mu) = (1-mu) S3 + mu S4`` and ``delta(mu) = (1-mu) delta3 + mu delta4``
    with ``S0' <= 0`` and ``delta4 - delta3 >= 0`` (both sampled and enforced).
    """
    from .morse import HomotopyModel
    from .symplectic import structure_matrix

    hm = HomotopyModel(m3, m4)
    a0 = np.atleast_2d(np.asarray(alpha0, dtype=float))
    b0 = np.atleast_2d(np.asarray(beta0, dtype=float))
    d3 = np.atleast_2d(np.asarray(delta3, dtype=float))
    d4 = np.atleast_2d(np.asarray(delta4, dtype=float))
    s_prime = structure_matrix(hm.M_lambda(np.linspace(0.0, t, samples)))
    if np.max(np.linalg.eigvalsh(0.5 * (s_prime + tr(s_prime)))) > 1e-12:
        raise ConfigError("S0' must be negative semidefinite")
    if np.min(np.linalg.eigvalsh(d4 - d3)) < -1e-12:
        raise ConfigError("delta4 - delta3 must be positive semidefinite")
    mus = tuple(sorted(float(m) for m in mus))
    Y0 = np.vstack([a0.T, -b0.T])
    # starting angles, continued in mu so that phi(0, mu) is continuous
    deltas = [(1 - m) * d3 + m * d4 for m in mus]
    start_path = PairPath(lambda s: (np.array([a0 @ ((1 - m) * d3 + m * d4) - b0 for m in s]),
                                     np.array([-a0 for _ in s])), np.array(mus), "mu")
    start = lift_track(start_path, None, crossings=False)
    values = []
    for i, mu in enumerate(mus):
        blk = integrate_block(hm, mu, t, Y0, h, adapt=False)
        delta = deltas[i]
        path = PairPath(lambda s, blk=blk, delta=delta: pair_from_block(blk.block_at(s), delta),
                        blk.tau, "tau")
        mu_idx = int(np.argmin(np.abs(start.param - mu)))
        track = lift_track(path, start.phi[mu_idx], crossings=False)
        keep = np.isin(track.param, blk.tau)
        values.append(np.sort(track.phi[keep], axis=1))
    worst = -math.inf
    for lo, hi in zip(values[:-1], values[1:]):
        worst = max(worst, float(np.max(lo - hi)))
    return T8Report(worst <= tol, worst, mus)


def eigenvalues_below(norm: NormalizedSL, level: float, solver: Optional[SLSolver] = None,
                      h: float = 1e-3, lam_min: float = -10.0) -> list:
    """All eigenpairs with ``lam_{j,k} < level`` plus the first one above on each branch.

    The number of ``k`` to solve for is predicted from ``phi(t, level)`` and
    the solved values are returned for independent counting.
    """
    solver = solver or SLSolver(norm, h)
    est = estimate_lj(norm, min(lam_min, level - 1.0), solver)
    phi = solver.phi_t(level)
    out = []
    for j in range(norm.n):
        predicted = max(0, int(math.floor(est.l[j] - 0.5 - phi[j] / math.pi)) + 1)
        out.extend(solve_eigenvalues(norm, [j], range(predicted + 1), (est.lam, level + 1.0),
                                     h, solver, check_zeros=False))
    return out


@dataclass(frozen=True)
class CountReport:
    """Crossings of ``Q2(., level)`` on ``(0, t)`` against the solved spectrum below ``level``.

    ``upper_starts`` counts sorted branches with ``phi_j(0) < (l_j - 1/2) pi``.
    Such a branch reaches its limit ``l_j pi`` from below, so its ``k = 0``
    level lies between ``phi_j(0)`` and ``l_j pi`` and is never crossed in tau.
    The plain equality ``crossings == eigen_count`` therefore needs
    ``upper_starts == 0``; in general ``crossings + upper_starts == eigen_count``.
    """

    level: float
    crossings: int
    signed: int
    eigen_count: int
    upper_starts: int
    boundary_events: int
    eigenvalues: tuple

    @property
    def equal(self) -> bool:
        return self.crossings == self.eigen_count

    @property
    def corrected_equal(self) -> bool:
        return self.crossings + self.upper_starts == self.eigen_count


def count_report(norm: NormalizedSL, level: float, solver: Optional[SLSolver] = None,
                 h: float = 1e-3, det_tol: float = 1e-8) -> CountReport:
    solver = solver or SLSolver(norm, h)
    q2, q1 = pair_from_block(solver.block(level).Y[-1], norm.delta)
    scale = np.linalg.norm(np.hstack([q2, q1]), 2)
    if np.linalg.svd(q2 / scale, compute_uv=False)[-1] < det_tol:
        raise NumericalError(f"Q2(t, {level}) is singular; the count is not defined")
    pairs = eigenvalues_below(norm, level, solver)
    eig = tuple(sorted(p.eigenvalue for p in pairs if p.eigenvalue < level))
    est = estimate_lj(norm, min(-10.0, level - 1.0), solver)
    start = np.sort(solver.phi0)
    upper = int(np.sum(start < (np.sort(est.l) - 0.5) * math.pi))
    cnt = tau_crossing_count(solver, level)
    return CountReport(float(level), cnt.count, cnt.signed, len(eig), upper,
                       len(cnt.boundary_events), eig)
