"""Matrix polar angle of a Lagrangian pair and its continuous eigen-angle lift.

For a pair ``(Q2, Q1)`` with ``Q1 Q2^T`` symmetric and ``Q2 Q2^T + Q1 Q1^T > 0``
there are ``r`` invertible and ``phi`` symmetric with ``Q2 = r cos(phi)`` and
``Q1 = r sin(phi)``.  Rather than integrating an ODE for ``phi`` we use

    V = (Q2 - i Q1)^{-1} (Q2 + i Q1) = exp(2 i phi),

which is complex symmetric and unitary, hence diagonalized by a real orthogonal
basis.  ``V`` only fixes ``2 phi`` modulo ``2 pi``; branches are continued along
a parameter grid and the ambiguity is fixed by caller-supplied start values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .errors import BoundaryDegenerateError, ConfigError, NumericalError, RefinementError
from .symplectic import blocks, tr

HALF_PI = 0.5 * math.pi
GAMMA_1 = math.sqrt(2.0) - 1.0
GAMMA_2 = math.pi / 7.0
COND_MAX = 1e12


def wrap(x):
    """Map angles to ``[-pi, pi)``."""
    return np.mod(np.asarray(x) + math.pi, 2 * math.pi) - math.pi


@dataclass(frozen=True)
class LagrangianPair:
    Q2: np.ndarray
    Q1: np.ndarray

    @property
    def n(self) -> int:
        return self.Q2.shape[-1]

    def residuals(self) -> tuple[float, float]:
        """``(||Q1 Q2^T - Q2 Q1^T|| / scale, smallest eigenvalue of Q2 Q2^T + Q1 Q1^T / scale)``."""
        q2, q1 = self.Q2, self.Q1
        gram = q2 @ tr(q2) + q1 @ tr(q1)
        scale = max(1e-300, float(np.max(np.linalg.eigvalsh(gram))))
        asym = float(np.max(np.linalg.norm(q1 @ tr(q2) - q2 @ tr(q1), axis=(-2, -1)))) / scale
        lam_min = float(np.min(np.linalg.eigvalsh(gram))) / scale
        return asym, lam_min

    def check(self, tol: float = 1e-8) -> None:
        asym, lam_min = self.residuals()
        if asym > tol:
            raise ConfigError(f"Q1 Q2^T is not symmetric (relative residual {asym:.3e})")
        if lam_min <= 0:
            raise ConfigError("Q2 Q2^T + Q1 Q1^T is not positive definite")


@dataclass(frozen=True)
class UnitaryReduction:
    """Batched ``V = exp(2 i phi)`` data; leading axes are the batch."""

    re: np.ndarray
    im: np.ndarray
    basis: np.ndarray
    theta: np.ndarray

    @property
    def V(self) -> np.ndarray:
        return self.re + 1j * self.im

    def unitarity_residual(self) -> float:
        v = self.V
        eye = np.eye(v.shape[-1])
        return float(np.max(np.linalg.norm(v @ np.conj(tr(v)) - eye, axis=(-2, -1))))

    def symmetry_residual(self) -> float:
        v = self.V
        return float(np.max(np.linalg.norm(v - tr(v), axis=(-2, -1))))

    def commutator_residual(self) -> float:
        return float(np.max(np.linalg.norm(self.re @ self.im - self.im @ self.re, axis=(-2, -1))))

    def offdiag_residual(self) -> float:
        d = tr(self.basis) @ self.V @ self.basis
        off = d - d * np.eye(d.shape[-1])
        return float(np.max(np.abs(off))) if off.size else 0.0

    def phi_matrix(self) -> np.ndarray:
        """A symmetric ``phi`` with eigen-angles ``theta / 2`` in ``(-pi/2, pi/2]``."""
        return self.basis @ (0.5 * self.theta[..., :, None] * tr(self.basis))


def _joint_basis(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    """Real orthogonal basis diagonalizing the commuting symmetric pair (re, im)."""
    sym = lambda m: 0.5 * (m + tr(m))
    re, im = sym(re), sym(im)
    if re.ndim == 2:
        return _joint_basis(re[None], im[None])[0]
    w, basis = np.linalg.eigh(re + GAMMA_1 * im)
    n = re.shape[-1]
    if n == 1:
        return basis
    gaps = np.diff(w, axis=-1)
    close = np.any(gaps < 1e-6, axis=-1)
    if np.any(close):
        second = re + GAMMA_2 * im
        for idx in zip(*np.nonzero(close)):
            o = basis[idx].copy()
            wi = w[idx]
            start = 0
            for k in range(1, n + 1):
                if k == n or wi[k] - wi[k - 1] >= 1e-6:
                    if k - start > 1:
                        sub = o[:, start:k]
                        _, rot = np.linalg.eigh(sub.T @ second[idx] @ sub)
                        o[:, start:k] = sub @ rot
                    start = k
            basis[idx] = o
    return basis


def unitary_reduction(Q2, Q1, cond_max: float = COND_MAX) -> UnitaryReduction:
    """``V = (Q2 - i Q1)^{-1} (Q2 + i Q1)``, its joint eigenbasis and raw angles.

    Batched over leading axes.  ``theta`` lies in ``(-pi, pi]`` and equals
    ``2 phi`` modulo ``2 pi``.
    """
    Q2 = np.asarray(Q2, dtype=float)
    Q1 = np.asarray(Q1, dtype=float)
    if Q2.shape != Q1.shape or Q2.shape[-1] != Q2.shape[-2]:
        raise ConfigError("Q2 and Q1 must be square matrices of equal shape")
    minus = Q2 - 1j * Q1
    sv = np.linalg.svd(minus, compute_uv=False)
    cond = sv[..., 0] / np.maximum(sv[..., -1], 1e-300)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_max):
        raise NumericalError(
            f"Q2 - iQ1 is ill-conditioned (cond {np.max(cond):.3e}); the pair is not Lagrangian")
    V = np.linalg.solve(minus, Q2 + 1j * Q1)
    basis = _joint_basis(V.real, V.imag)
    d_re = np.einsum("...ij,...ik,...kj->...j", basis, V.real, basis)
    d_im = np.einsum("...ij,...ik,...kj->...j", basis, V.imag, basis)
    theta = np.arctan2(d_im, d_re)
    return UnitaryReduction(V.real, V.imag, basis, theta)


def realness_residual(Q2, Q1, phi_matrix) -> tuple[float, float]:
    """Check ``r = (Q2 + i Q1) exp(-i phi)`` is real and invertible.

    Returns ``(max |Im r| / ||Q2 + i Q1||, smallest singular value of Re r / ||Q2 + i Q1||)``.
    """
    w, o = np.linalg.eigh(phi_matrix)
    expm = o @ (np.exp(-1j * w)[..., :, None] * tr(o))
    z = Q2 + 1j * Q1
    r = z @ expm
    scale = np.linalg.norm(z, axis=(-2, -1))
    imag = np.linalg.norm(r.imag, axis=(-2, -1)) / scale
    smin = np.linalg.svd(r.real, compute_uv=False)[..., -1] / scale
    return float(np.max(imag)), float(np.min(smin))


# ---------------------------------------------------------------------------
# paths of pairs


@dataclass
class PairPath:
    """A parameterized family of Lagrangian pairs with batched evaluation."""

    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    grid: np.ndarray
    name: str = "tau"

    @classmethod
    def from_flow(cls, flow, selector: Callable = None, stride: int = 1) -> "PairPath":
        """Pairs ``selector(Phi0(tau))`` along a :class:`FlowSolution`.

        The default selector is the top block row ``(Q2, Q1)`` of the frame.
        ``stride`` thins the starting grid; dense output fills in where needed.
        """
        selector = selector or top_row
        grid = flow.tau[::stride]
        if grid[-1] != flow.tau[-1]:
            grid = np.append(grid, flow.tau[-1])
        return cls(lambda s: selector(flow.frame_at(s)), grid, "tau")


def top_row(frames: np.ndarray):
    q2, q1, _, _ = blocks(frames)
    return q2, q1


def morse_selector(N: np.ndarray) -> Callable:
    """``(Qc + Qs N, Qs)``: top row of ``Phi0 [[I, 0], [N, I]]``."""
    N = np.asarray(N, dtype=float)

    def select(frames):
        qc, qs, _, _ = blocks(frames)
        return qc + qs @ N, qs

    return select


# ---------------------------------------------------------------------------
# lifting


@dataclass(frozen=True)
class Crossing:
    param: float
    branch: int
    direction: int
    level: float
    sigma_min: float = float("nan")


def _initial_order(theta0: np.ndarray, init: np.ndarray, tol: float) -> np.ndarray:
    cost = np.abs(wrap(theta0[None, :] - 2 * init[:, None]))
    rows, cols = linear_sum_assignment(cost)
    order = np.empty_like(cols)
    order[rows] = cols
    if np.max(cost[rows, cols]) > tol:
        raise ConfigError("initial branch values are inconsistent with the raw angles")
    return order


def _step_permutations(theta: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """``perm[i, j]``: raw index at point i+1 continuing raw index j at point i."""
    m, n = theta.shape
    if n == 1:
        return np.zeros((m - 1, 1), dtype=int)
    cost = np.abs(wrap(theta[1:, None, :] - theta[:-1, :, None]))
    overlap = np.abs(tr(basis[:-1]) @ basis[1:])
    cost = cost + 1e-7 * (1.0 - overlap**2)
    best = np.argmin(cost, axis=-1)
    perm = best.copy()
    srt = np.sort(cost, axis=-1)
    unique = np.all(srt[..., 1] - srt[..., 0] > 1e-12, axis=-1)
    is_perm = np.all(np.sort(best, axis=-1) == np.arange(n), axis=-1)
    for i in np.nonzero(~(unique & is_perm))[0]:
        rows, cols = linear_sum_assignment(cost[i])
        perm[i, rows] = cols
    return perm


def _lift_values(theta, basis, init, tol_init):
    m, n = theta.shape
    order = np.empty((m, n), dtype=int)
    order[0] = _initial_order(theta[0], init, tol_init)
    perm = _step_permutations(theta, basis)
    for i in range(m - 1):
        order[i + 1] = perm[i, order[i]]
    th = np.take_along_axis(theta, order, axis=1)
    inc = 0.5 * wrap(np.diff(th, axis=0))
    phi = init[None, :] + np.vstack([np.zeros((1, n)), np.cumsum(inc, axis=0)])
    vecs = np.take_along_axis(basis, order[:, None, :], axis=2)
    return phi, vecs, inc


@dataclass
class AngleTrack:
    """Lifted eigen-angles ``phi_j`` over a parameter grid."""

    param: np.ndarray
    phi: np.ndarray
    vectors: np.ndarray
    path: Optional[PairPath] = field(default=None, repr=False)
    crossings: list = field(default_factory=list)
    name: str = "tau"

    @property
    def n(self) -> int:
        return self.phi.shape[1]

    def max_increment(self) -> float:
        if self.param.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.phi, axis=0))))

    def _interval(self, s: float) -> int:
        p = self.param
        if s < p[0] - 1e-12 * max(1.0, abs(p[0])) or s > p[-1] + 1e-12 * max(1.0, abs(p[-1])):
            raise ConfigError(f"{self.name}={s} outside the track")
        return int(np.clip(np.searchsorted(p, s, side="right") - 1, 0, p.size - 2))

    def value_at(self, s: float) -> np.ndarray:
        """Dense lifted branch values at ``s`` (continued from the left grid point)."""
        if self.path is None:
            raise ConfigError("track has no dense source")
        i = self._interval(s)
        if s == self.param[i]:
            return self.phi[i].copy()
        q2, q1 = self.path.evaluate(np.array([s]))
        red = unitary_reduction(q2, q1)
        theta = red.theta[0]
        ref = self.phi[i]
        cost = np.abs(wrap(theta[None, :] - 2 * ref[:, None]))
        overlap = np.abs(tr(self.vectors[i]) @ red.basis[0])
        cost = cost + 1e-7 * (1.0 - overlap**2)
        rows, cols = linear_sum_assignment(cost)
        out = np.empty(self.n)
        out[rows] = ref[rows] + 0.5 * wrap(theta[cols] - 2 * ref[rows])
        return out

    def sigma_min_at(self, s: float) -> float:
        """Smallest singular value of ``Q2`` relative to the pair's norm at ``s``."""
        q2, q1 = self.path.evaluate(np.array([s]))
        scale = np.linalg.norm(np.concatenate([q2[0], q1[0]], axis=1), 2)
        return float(np.linalg.svd(q2[0], compute_uv=False)[-1] / scale)

    def find_crossings(self, offset: float = HALF_PI, tol: float = 1e-10,
                       localize: str = "brent") -> list:
        """All crossings of levels ``offset + k pi`` by any branch.

        A level ``L`` is crossed upward on ``(a, b]`` when ``a < L <= b`` and downward
        when ``b <= L < a``; a point sitting exactly on a level counts on arrival.
        ``localize`` is ``"brent"`` (bracketing root search to ``tol``) or
        ``"linear"`` (interpolate within the grid interval).
        """
        events = []
        p, phi = self.param, self.phi
        lo = (phi[:-1] - offset) / math.pi
        hi = (phi[1:] - offset) / math.pi
        up_k0 = np.floor(lo) + 1
        up_k1 = np.floor(hi)
        dn_k0 = np.ceil(hi)
        dn_k1 = np.ceil(lo) - 1
        for i in range(p.size - 1):
            for b in range(self.n):
                a, c = phi[i, b], phi[i + 1, b]
                if c > a:
                    ks = range(int(up_k0[i, b]), int(up_k1[i, b]) + 1)
                    direction = 1
                elif c < a:
                    ks = range(int(dn_k0[i, b]), int(dn_k1[i, b]) + 1)
                    direction = -1
                else:
                    continue
                for k in ks:
                    level = offset + k * math.pi
                    s = self._localize(i, b, level, tol, localize)
                    events.append(Crossing(float(s), b, direction, level))
        events.sort(key=lambda e: (e.param, e.branch, e.level))
        return events

    def _localize(self, i, b, level, tol, method):
        s0, s1 = self.param[i], self.param[i + 1]
        f0, f1 = self.phi[i, b] - level, self.phi[i + 1, b] - level
        if f1 == 0.0:
            return s1
        if method == "linear" or self.path is None:
            return s0 + (s1 - s0) * f0 / (f0 - f1)
        g = lambda s: self.value_at(s)[b] - level
        if g(s0) * g(s1) > 0:
            # the dense branch match is ambiguous at this resolution
            return s0 + (s1 - s0) * f0 / (f0 - f1)
        xtol = tol * max(1.0, abs(s0), abs(s1))
        return brentq(g, s0, s1, xtol=xtol, rtol=4 * np.finfo(float).eps)


def lift_track(path: PairPath, initial_values: Optional[Sequence[float]] = None,
               max_jump: float = math.pi / 8, min_width: float = 1e-12,
               max_rounds: int = 60, crossings: bool = True,
               localize: str = "brent", init_tol: float = 1e-6) -> AngleTrack:
    """Continuously lift the eigen-angles of the pairs along ``path``.

    ``initial_values`` fixes the branch values at the first grid point; by
    default ``theta / 2`` in ``(-pi/2, pi/2]`` is used.  Intervals where a branch
    moves by more than ``max_jump`` are bisected using the path's dense output.
    Level crossings of ``pi/2 + k pi`` are localized when ``crossings`` is set.
    """
    if max_jump >= math.pi / 4 + 1e-15:
        raise ConfigError("max_jump must be below pi/4")
    grid = np.asarray(path.grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ConfigError("path grid must be strictly increasing with at least two points")
    q2, q1 = path.evaluate(grid)
    red = unitary_reduction(q2, q1)
    theta, basis = red.theta, red.basis
    if initial_values is None:
        init = 0.5 * theta[0]
        init = np.where(init <= -HALF_PI, init + math.pi, init)
    else:
        init = np.asarray(initial_values, dtype=float).reshape(-1)
        if init.size != theta.shape[1]:
            raise ConfigError("need one initial value per branch")
    for _ in range(max_rounds):
        phi, vecs, inc = _lift_values(theta, basis, init, init_tol)
        bad = np.nonzero(np.max(np.abs(inc), axis=1) > max_jump)[0]
        if bad.size == 0:
            break
        widths = grid[bad + 1] - grid[bad]
        scale = max(1.0, float(np.max(np.abs(grid))))
        if np.any(widths < min_width * scale):
            raise RefinementError(
                f"branch displacement above {max_jump:.3f} on an interval of width {widths.min():.3e}")
        mids = 0.5 * (grid[bad] + grid[bad + 1])
        mq2, mq1 = path.evaluate(mids)
        mred = unitary_reduction(mq2, mq1)
        pos = np.searchsorted(grid, mids)
        grid = np.insert(grid, pos, mids)
        theta = np.insert(theta, pos, mred.theta, axis=0)
        basis = np.insert(basis, pos, mred.basis, axis=0)
    else:
        raise RefinementError("lift refinement did not converge")
    track = AngleTrack(grid, phi, vecs, path, [], path.name)
    if crossings:
        track.crossings = track.find_crossings(localize=localize)
    return track


@dataclass(frozen=True)
class SingularityCount:
    count: int
    signed: int
    events: list
    boundary_events: list


def count_singularities(track: AngleTrack, up_to: Optional[float] = None,
                        start: Optional[float] = None, offset: float = HALF_PI,
                        boundary_tol: float = 1e-9, strict: bool = False) -> SingularityCount:
    """Count level crossings with ``start < param < up_to`` (with multiplicity).

    Events within ``boundary_tol`` of ``up_to`` are reported separately in
    ``boundary_events``; with ``strict`` they raise
    :class:`BoundaryDegenerateError` instead.  ``signed`` sums the directions.
    """
    if up_to is None:
        up_to = float(track.param[-1])
    if up_to > track.param[-1] + boundary_tol:
        raise ConfigError("track does not cover the requested range")
    start = float(track.param[0]) if start is None else start
    events = track.crossings if offset == HALF_PI and track.crossings else track.find_crossings(offset)
    counted, boundary = [], []
    for e in events:
        if e.param <= start:
            continue
        if abs(e.param - up_to) <= boundary_tol * max(1.0, abs(up_to)):
            boundary.append(e)
        elif e.param < up_to:
            counted.append(e)
    if boundary and strict:
        raise BoundaryDegenerateError(f"crossing at the end point {up_to}")
    return SingularityCount(len(counted), int(sum(e.direction for e in counted)), counted, boundary)


@dataclass(frozen=True)
class MonotonicityReport:
    ok: bool
    violations: int
    min_increment: float
    min_c_eigenvalue: float


def monotonicity_check(track: AngleTrack, model=None, lam: float = 0.0, sign: int = 1,
                       samples: int = 65) -> MonotonicityReport:
    """Verify ``sign * (phi_j(s_{i+1}) - phi_j(s_i)) > 0`` for all steps.

    When ``model`` is given the definiteness of ``sign * C`` is sampled first and
    a :class:`ConfigError` is raised if it fails.
    """
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    cmin = float("nan")
    if model is not None:
        tau = np.linspace(track.param[0], track.param[-1], samples)
        c = model.coefficients(tau, lam)[2]
        cmin = float(np.min(np.linalg.eigvalsh(sign * c)))
        if cmin <= 0:
            raise ConfigError("C is not definite with the requested sign")
    inc = sign * np.diff(track.phi, axis=0)
    return MonotonicityReport(bool(np.all(inc > 0)), int(np.sum(inc <= 0)),
                              float(np.min(inc)) if inc.size else float("inf"), cmin)


# ---------------------------------------------------------------------------
# scalar lifts


def scalar_xi(k1: float, k2: float, tau):
    """Continuous ``xi`` with ``tan xi = k1 + k2 tan tau`` and ``xi(0)`` in ``(-pi/2, pi/2)``."""
    tau = np.asarray(tau, dtype=float)
    if k2 == 0:
        return np.full_like(tau, math.atan(k1))
    if k2 < 0:
        return -scalar_xi(-k1, -k2, tau)
    m = np.ceil(tau / math.pi - 0.5)
    s = tau - m * math.pi
    cs = np.cos(s)
    return m * math.pi + np.arctan2(k1 * cs + k2 * np.sin(s), cs)


def scalar_zeta(k1: float, k2: float, tau):
    """``zeta = pi/2 - xi``."""
    return HALF_PI - scalar_xi(k1, k2, tau)


def scalar_xi_matrix(k1: float, k2: float, S) -> np.ndarray:
    """``Omega diag(xi(k1, k2, s_i)) Omega^T`` for ``S = Omega diag(s) Omega^T``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if np.linalg.norm(S - S.T) > 1e-12 * max(1.0, np.linalg.norm(S)):
        raise ConfigError("S must be symmetric")
    w, omega = np.linalg.eigh(0.5 * (S + S.T))
    return omega @ np.diag(scalar_xi(k1, k2, w)) @ omega.T


def scalar_example_pair(k1: float, k2: float):
    """Right factor ``c [[1, k1], [0, k2]]``, ``c = k2^{-1/2}``, making the pair
    ``(cos tau, k1 cos tau + k2 sin tau) / sqrt(k2)`` from the harmonic frame."""
    if k2 <= 0:
        raise ConfigError("k2 must be positive")
    c = k2**-0.5
    return c * np.array([[1.0, k1], [0.0, k2]])
