"""Conjugate points and the Morse index of a quadratic action.

The action is
``S(g) = int_0^t [ (g', C^{-1} g')/2 - (g', C^{-1} B g) - (g, Acal g)/2 ] + (g(0), N g(0))/2``
with ``Acal = A - B^T C^{-1} B`` over paths with ``g(t) = 0``.  Its index is
read off the polar angle of the pair ``(Qc + Qs N, Qs)`` started at ``phi = 0``:
``mu_j`` is the integer with ``-pi/2 + mu_j pi < phi_j(t) < pi/2 + mu_j pi``.
The finite-element form in :func:`discretize_quadratic_form` is an independent
oracle for the same number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh

from .angles import AngleTrack, PairPath, count_singularities, lift_track, morse_selector
from .errors import BoundaryDegenerateError, ConfigError, NumericalError
from .flow import CoefficientModel, FlowSolution, integrate_fundamental
from .symplectic import J, hamiltonian_matrix, structure_matrix, tr

SINGULAR_TOL = 1e-8


@dataclass(frozen=True)
class ActionProblem:
    model: CoefficientModel
    N: np.ndarray
    t: float

    def __post_init__(self):
        N = np.atleast_2d(np.asarray(self.N, dtype=float))
        object.__setattr__(self, "N", N)
        if N.shape != (self.model.n, self.model.n):
            raise ConfigError("N must be n x n")
        if np.linalg.norm(N - N.T) > 1e-12 * max(1.0, np.linalg.norm(N)):
            raise ConfigError("N must be symmetric")
        if not self.t > 0:
            raise ConfigError("horizon t must be positive")

    def check_positive(self, samples: int = 65) -> float:
        """Smallest sampled eigenvalue of C; raises if not positive."""
        c = self.model.coefficients(np.linspace(0.0, self.t, samples))[2]
        cmin = float(np.min(np.linalg.eigvalsh(0.5 * (c + tr(c)))))
        if cmin <= 0:
            raise ConfigError("C must be positive definite on [0, t]")
        return cmin


@dataclass
class MorseResult:
    mu: int
    mu_j: np.ndarray
    phi_t: np.ndarray
    conjugate_points: list
    sigma_min: float
    track: AngleTrack = field(repr=False)


def morse_track(problem: ActionProblem, h: float = 1e-3, flow: Optional[FlowSolution] = None,
                stride: int = 4) -> AngleTrack:
    flow = flow or integrate_fundamental(problem.model, 0.0, problem.t, h)
    path = PairPath.from_flow(flow, morse_selector(problem.N), stride=stride)
    return lift_track(path, np.zeros(problem.model.n))


def singular_margin(phi_t) -> float:
    """Distance of the end angles from the singular levels ``pi/2 + k pi``."""
    phi_t = np.asarray(phi_t, dtype=float)
    return float(np.min(np.abs(np.mod(phi_t, math.pi) - 0.5 * math.pi)))


def morse_index(problem: ActionProblem, h: float = 1e-3, flow: Optional[FlowSolution] = None,
                singular_tol: float = SINGULAR_TOL) -> MorseResult:
    """Index ``mu = sum mu_j`` plus the conjugate points in ``(0, t)``.

    Raises :class:`BoundaryDegenerateError` when ``Q2(t)`` is numerically singular
    and :class:`NumericalError` if the angle count and the crossing count disagree.
    """
    problem.check_positive()
    track = morse_track(problem, h, flow)
    sigma = track.sigma_min_at(problem.t)
    if sigma < singular_tol:
        raise BoundaryDegenerateError(f"Q2(t) is singular (relative sigma_min {sigma:.2e})")
    phi_t = track.phi[-1]
    mu_j = np.floor(phi_t / math.pi + 0.5).astype(int)
    count = count_singularities(track, problem.t)
    mu = int(mu_j.sum())
    if count.count != mu:
        raise NumericalError(f"angle index {mu} disagrees with crossing count {count.count}")
    points = [e.param for e in count.events]
    return MorseResult(mu, mu_j, phi_t, points, sigma, track)


@dataclass(frozen=True)
class DiscretizedForm:
    m: int
    n: int
    t: float
    matrix: np.ndarray
    gram: np.ndarray

    def negative_count(self) -> int:
        return int(np.sum(np.linalg.eigvalsh(self.matrix) < 0))

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the form relative to the path inner product ``int (g', C^{-1} g')``."""
        return eigh(self.matrix, self.gram, eigvals_only=True)


def discretize_quadratic_form(problem: ActionProblem, m: int) -> DiscretizedForm:
    """Hat-function discretization on ``m`` uniform elements with ``g(t) = 0``.

    Unknowns are the nodal values at ``tau_0 .. tau_{m-1}``; each element uses
    one midpoint quadrature point.
    """
    if m < 2:
        raise ConfigError("m must be >= 2")
    n, t = problem.model.n, problem.t
    nodes = np.linspace(0.0, t, m + 1)
    d = t / m
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    A, B, C = problem.model.coefficients(mid)
    try:
        Cinv = np.linalg.inv(C)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("C is singular at a quadrature node") from exc
    Acal = A - tr(B) @ Cinv @ B
    eye = np.eye(n)
    D = np.hstack([-eye, eye]) / d
    P = np.hstack([eye, eye]) / 2
    CB = Cinv @ B
    local = d * (tr(D) @ Cinv @ D - tr(D) @ CB @ P - tr(P) @ tr(CB) @ D - tr(P) @ Acal @ P)
    local_gram = d * (tr(D) @ Cinv @ D)
    size = n * (m + 1)
    K = np.zeros((size, size))
    G = np.zeros((size, size))
    for e in range(m):
        sl = slice(n * e, n * (e + 2))
        K[sl, sl] += local[e]
        G[sl, sl] += local_gram[e]
    K[:n, :n] += problem.N
    keep = n * m
    K, G = K[:keep, :keep], G[:keep, :keep]
    return DiscretizedForm(m, n, t, 0.5 * (K + K.T), 0.5 * (G + G.T))


def form_singular_threshold(problem: ActionProblem, m: int, factor: float = 50.0) -> float:
    """Near-zero threshold for form eigenvalues, scaling like the mesh width squared."""
    return max(1e-6, factor * (problem.t / m) ** 2)


@dataclass(frozen=True)
class EquivalenceReport:
    form_min_abs: float
    q2_sigma_min: float
    form_singular: bool
    q2_singular: bool
    form_threshold: float
    q2_threshold: float

    @property
    def agree(self) -> bool:
        return self.form_singular == self.q2_singular


def invertibility_equivalence_check(problem: ActionProblem, m: int = 400, h: float = 1e-3,
                                    q2_threshold: float = 1e-6,
                                    form_threshold: Optional[float] = None) -> EquivalenceReport:
    """Compare near-singularity of the discretized form with that of ``Q2(t)``.

    The form side uses eigenvalues relative to the path inner product so that it
    approximates the operator spectrum; its threshold defaults to
    :func:`form_singular_threshold` because the discretization error of an
    eigenvalue is proportional to the squared mesh width.
    """
    form = discretize_quadratic_form(problem, m)
    lam = form.eigenvalues()
    fmin = float(np.min(np.abs(lam)))
    flow = integrate_fundamental(problem.model, 0.0, problem.t, h)
    q2, q1 = morse_selector(problem.N)(flow.final)
    scale = np.linalg.norm(np.hstack([q2, q1]), 2)
    smin = float(np.linalg.svd(q2, compute_uv=False)[-1] / scale)
    ft = form_singular_threshold(problem, m) if form_threshold is None else form_threshold
    return EquivalenceReport(fmin, smin, fmin < ft, smin < q2_threshold, ft, q2_threshold)


class HomotopyModel:
    """``S0(mu) = (1 - mu) S3 + mu S4`` from two lambda-independent models.

    Duck-types :class:`CoefficientModel` with ``mu`` in the role of lambda.
    """

    def __init__(self, m3: CoefficientModel, m4: CoefficientModel):
        if m3.n != m4.n:
            raise ConfigError("models must have the same dimension")
        if m3.has_lambda or m4.has_lambda:
            raise ConfigError("homotopy end points must be lambda-independent")
        self.n = m3.n
        self.m3, self.m4 = m3, m4
        self.has_lambda = True

    def coefficients(self, tau, lam: float = 0.0):
        c3 = self.m3.coefficients(tau)
        c4 = self.m4.coefficients(tau)
        return tuple((1 - lam) * a + lam * b for a, b in zip(c3, c4))

    def lambda_coefficients(self, tau):
        c3 = self.m3.coefficients(tau)
        c4 = self.m4.coefficients(tau)
        return tuple(b - a for a, b in zip(c3, c4))

    def M(self, tau, lam: float = 0.0):
        return hamiltonian_matrix(*self.coefficients(tau, lam))

    def M_lambda(self, tau):
        return hamiltonian_matrix(*self.lambda_coefficients(tau))

    def jsj(self, tau) -> np.ndarray:
        """``J S0' J`` sampled at ``tau``."""
        j = J(self.n)
        return j @ structure_matrix(self.M_lambda(tau)) @ j


@dataclass(frozen=True)
class OrderReport:
    ok: bool
    max_violation: float
    jsj_max_eigenvalue: float
    mus: tuple


def mu_monotonicity_check(m3: CoefficientModel, m4: CoefficientModel, N, t: float,
                          mus: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
                          h: float = 2e-3, tol: float = 1e-7, samples: int = 65) -> OrderReport:
    """Check sorted ``phi(tau, mu)`` is nondecreasing in ``mu`` on the flow grid.

    Requires ``J S0' J <= 0`` (sampled); raises :class:`ConfigError` otherwise.
    """
    hm = HomotopyModel(m3, m4)
    jsj = hm.jsj(np.linspace(0.0, t, samples))
    top = float(np.max(np.linalg.eigvalsh(0.5 * (jsj + tr(jsj)))))
    if top > 1e-12:
        raise ConfigError("J S0' J is not negative semidefinite")
    N = np.atleast_2d(np.asarray(N, dtype=float))
    sorted_tracks = []
    for mu in sorted(mus):
        flow = integrate_fundamental(hm, mu, t, h)
        path = PairPath.from_flow(flow, morse_selector(N))
        track = lift_track(path, np.zeros(hm.n), crossings=False)
        # evaluate on the common flow grid
        phi = np.array([track.value_at(s) for s in flow.tau]) if track.param.size != flow.tau.size \
            else track.phi
        sorted_tracks.append(np.sort(phi, axis=1))
    worst = -math.inf
    for lo, hi in zip(sorted_tracks[:-1], sorted_tracks[1:]):
        worst = max(worst, float(np.max(lo - hi)))
    return OrderReport(worst <= tol, worst, top, tuple(sorted(mus)))
