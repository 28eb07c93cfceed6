"""Seeded random problem instances shared by the test suite and the experiment scripts."""
from __future__ import annotations

import math

import numpy as np

from .flow import CoefficientModel, MatrixFunction
from .morse import ActionProblem
from .sturm import SLProblem
from .symplectic import random_symmetric


def spd(rng: np.random.Generator, n: int, floor: float = 0.5, scale: float = 0.5) -> np.ndarray:
    """Symmetric positive definite with smallest eigenvalue at least ``floor``."""
    g = scale * rng.standard_normal((n, n))
    return g @ g.T + floor * np.eye(n)


def positive_c_model(seed: int, n: int = None) -> CoefficientModel:
    """Random polynomial model with ``C(tau) > 0``, arbitrary ``B`` and symmetric ``A``."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 4))
    A = [random_symmetric(rng, n), random_symmetric(rng, n, 0.3)]
    B = [0.5 * rng.standard_normal((n, n)), 0.2 * rng.standard_normal((n, n))]
    C0, C1 = spd(rng, n), random_symmetric(rng, n, 0.05)
    return CoefficientModel(n, MatrixFunction.polynomial(A), MatrixFunction.polynomial(B),
                            MatrixFunction.polynomial([C0, C1]))


def morse_problem(seed: int, n: int = None) -> ActionProblem:
    """Polynomial ``A(tau)`` (quadratic, shifted by ``1.5 I``), ``B = 0``, ``C = I``, random ``N``."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 4))
    t = float(rng.uniform(1.0, 6.0))
    coefs = [random_symmetric(rng, n, s) for s in (2.0, 0.5, 0.1)]
    coefs[0] = coefs[0] + 1.5 * np.eye(n)
    N = random_symmetric(rng, n)
    eye = np.eye(n)
    model = CoefficientModel(n, MatrixFunction.polynomial(coefs), MatrixFunction.zeros(n),
                             MatrixFunction.constant(eye))
    return ActionProblem(model, N, t)


def separated_bc(rng: np.random.Generator, n: int, lower_start: bool = False):
    """Random separated self-adjoint ``(alpha0, beta0, gamma1, delta1)`` with ``gamma1`` invertible.

    With ``lower_start`` the data satisfy ``alpha0^{-1} beta0 < 0`` and
    ``delta >= 0``, which makes ``Q2(0)^{-1} Q1(0)`` negative definite: every
    starting eigen-angle lies in ``(-pi/2, 0)``.
    """
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    if lower_start:
        theta = rng.uniform(-0.45 * math.pi, -0.05 * math.pi, size=n)
    else:
        theta = rng.uniform(-0.45 * math.pi, 0.45 * math.pi, size=n)
    # alpha0 beta0^T = Q diag(cos sin) Q^T is symmetric
    alpha0 = Q @ np.diag(np.cos(theta)) @ Q.T
    beta0 = Q @ np.diag(np.sin(theta)) @ Q.T
    gamma1 = spd(rng, n)
    delta = spd(rng, n, 0.0, 0.4) if lower_start else random_symmetric(rng, n, 0.5)
    return alpha0, beta0, gamma1, gamma1 @ delta


def sl_problem(seed: int, n: int = 2, lower_start: bool = False) -> SLProblem:
    """Random regular problem with constant ``C0 > 0``, linear ``D``, constant ``E > 0``."""
    rng = np.random.default_rng(seed)
    t = float(rng.uniform(1.5, 3.0))
    C0 = MatrixFunction.constant(spd(rng, n, 0.7, 0.3))
    D = MatrixFunction.polynomial([random_symmetric(rng, n, 0.5), random_symmetric(rng, n, 0.2)])
    E = MatrixFunction.constant(spd(rng, n, 0.7, 0.3))
    alpha0, beta0, gamma1, delta1 = separated_bc(rng, n, lower_start)
    return SLProblem(C0, D, E, alpha0, beta0, gamma1, delta1, t)


def scalar_dirichlet_neumann(t: float = math.pi) -> SLProblem:
    """``q'' + lam q = 0``, ``q(0) = 0``, ``q'(t) = 0``."""
    return SLProblem.scalar(0.0, 1.0, 1.0, 0.0, t)


def scalar_robin(delta: float = 1.0, t: float = math.pi) -> SLProblem:
    """``q(0) = 0`` and ``delta q(t) + q'(t) = 0``."""
    return SLProblem.scalar(0.0, 1.0, 1.0, delta, t)
