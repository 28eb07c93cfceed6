"""Coefficient models, fundamental solutions and lambda-sensitivities.

The fundamental solution ``Phi0`` solves ``Phi0' = M0 Phi0`` with
``Phi0(0) = I``.  It is integrated with classical RK4 on a uniform grid.  For a
linear system each RK4 step is a matrix ``R_k``, so all step matrices are built
in one batched pass and only the product ``Phi_{k+1} = R_k Phi_k`` (plus the
symplectic re-projection) runs sequentially.

Lambda-sensitivities ``M2 = dPhi/dlambda Phi^{-1}`` are obtained by variation of
parameters: ``M2(tau) = V + int_0^tau F(tau, s) G F(tau, s)^{-1} ds`` where
``F(tau, s) = Phi(tau) Phi(s)^{-1}``.  Since ``F(tau, s) G F(tau, s)^{-1}
= Phi(tau) [Phi(s)^{-1} G Phi(s)] Phi(tau)^{-1}``, one cumulative Simpson
quadrature of the bracket on the flow grid gives ``M2`` at every grid point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import ConfigError, NumericalError
from .symplectic import (
    J,
    _fast_inverse,
    assemble,
    blocks,
    hamiltonian_matrix,
    is_antisymplectic,
    is_symplectic,
    project_symplectic,
    structure_matrix,
    tr,
)

KINDS = ("constant", "polynomial", "tabulated")


@dataclass(frozen=True)
class MatrixFunction:
    """A matrix-valued function of tau.

    ``constant``: ``data`` has shape ``(1, n, n)``.
    ``polynomial``: ``data[k]`` multiplies ``tau**k``.
    ``tabulated``: ``data[i]`` is the value at ``grid[i]``; linear interpolation.
    """

    kind: str
    data: np.ndarray
    grid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown matrix function kind {self.kind!r}")
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[1] != data.shape[2] or data.shape[0] < 1:
            raise ConfigError(f"matrix function data must have shape (k, n, n), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ConfigError("matrix function has non-finite entries")
        object.__setattr__(self, "data", data)
        if self.kind == "constant" and data.shape[0] != 1:
            raise ConfigError("constant matrix function takes exactly one matrix")
        if self.kind == "tabulated":
            if self.grid is None:
                raise ConfigError("tabulated matrix function needs a tau grid")
            grid = np.asarray(self.grid, dtype=float)
            if grid.shape != (data.shape[0],) or grid.size < 2:
                raise ConfigError("tabulated grid must match the number of values (at least 2)")
            if np.any(np.diff(grid) <= 0):
                raise ConfigError("tabulated grid must be strictly increasing")
            object.__setattr__(self, "grid", grid)

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @classmethod
    def constant(cls, value) -> "MatrixFunction":
        return cls("constant", np.asarray(value, dtype=float)[None])

    @classmethod
    def polynomial(cls, coefficients) -> "MatrixFunction":
        return cls("polynomial", np.asarray(coefficients, dtype=float))

    @classmethod
    def tabulated(cls, grid, values) -> "MatrixFunction":
        return cls("tabulated", np.asarray(values, dtype=float), np.asarray(grid, dtype=float))

    @classmethod
    def zeros(cls, n: int) -> "MatrixFunction":
        return cls.constant(np.zeros((n, n)))

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        shape = tau.shape
        flat = tau.reshape(-1)
        if self.kind == "constant":
            out = np.broadcast_to(self.data[0], (flat.size,) + self.data.shape[1:]).copy()
        elif self.kind == "polynomial":
            out = np.zeros((flat.size,) + self.data.shape[1:])
            for coef in self.data[::-1]:
                out = out * flat[:, None, None] + coef
        else:
            g = self.grid
            span = g[-1] - g[0]
            if np.any(flat < g[0] - 1e-12 * span) or np.any(flat > g[-1] + 1e-12 * span):
                raise ConfigError("tau outside the tabulated range")
            idx = np.clip(np.searchsorted(g, flat, side="right") - 1, 0, g.size - 2)
            w = ((flat - g[idx]) / (g[idx + 1] - g[idx]))[:, None, None]
            out = (1 - w) * self.data[idx] + w * self.data[idx + 1]
        return out.reshape(shape + self.data.shape[1:])

    def to_spec(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.data[0].tolist()}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "coefficients": self.data.tolist()}
        return {"kind": "tabulated", "tau": self.grid.tolist(), "values": self.data.tolist()}

    @classmethod
    def from_spec(cls, spec, n: int) -> "MatrixFunction":
        """Build from a JSON-style dict; a bare number means that multiple of I."""
        if isinstance(spec, (int, float)):
            return cls.constant(float(spec) * np.eye(n))
        kind = spec.get("kind", "constant")
        if kind == "constant":
            value = spec["value"]
            if isinstance(value, (int, float)):
                value = float(value) * np.eye(n)
            out = cls.constant(value)
        elif kind == "polynomial":
            out = cls.polynomial(spec["coefficients"])
        elif kind == "tabulated":
            out = cls.tabulated(spec["tau"], spec["values"])
        else:
            raise ConfigError(f"unknown matrix function kind {kind!r}")
        if out.n != n:
            raise ConfigError(f"matrix function has order {out.n}, expected {n}")
        return out


@dataclass(frozen=True)
class CoefficientModel:
    """``A0(tau, lam) = A(tau) + lam * A_lin(tau)`` and likewise for B0, C0."""

    n: int
    A: MatrixFunction
    B: MatrixFunction
    C: MatrixFunction
    A_lin: Optional[MatrixFunction] = None
    B_lin: Optional[MatrixFunction] = None
    C_lin: Optional[MatrixFunction] = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("dimension n must be >= 1")
        for name in ("A", "B", "C", "A_lin", "B_lin", "C_lin"):
            f = getattr(self, name)
            if f is not None and f.n != self.n:
                raise ConfigError(f"{name} has order {f.n}, expected {self.n}")

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, A, B, C, A_lin=None, B_lin=None, C_lin=None) -> "CoefficientModel":
        wrap = lambda m: None if m is None else MatrixFunction.constant(m)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(A.shape[0], wrap(A), wrap(np.atleast_2d(B)), wrap(np.atleast_2d(C)),
                   wrap(A_lin), wrap(B_lin), wrap(C_lin))

    @classmethod
    def harmonic(cls, n: int = 1, frequency: float = 1.0) -> "CoefficientModel":
        """``q'' + frequency^2 q = 0`` written with ``A = frequency^2 I``, ``C = I``."""
        eye = np.eye(n)
        return cls.constant(frequency**2 * eye, np.zeros((n, n)), eye)

    @classmethod
    def sturm_liouville(cls, C0: MatrixFunction, D: MatrixFunction, E: MatrixFunction) -> "CoefficientModel":
        """``A0 = -D + lam E``, ``B0 = 0``, ``C0`` as given."""
        n = C0.n
        minus_d = MatrixFunction(D.kind, -D.data, D.grid)
        return cls(n, minus_d, MatrixFunction.zeros(n), C0, A_lin=E)

    # -- evaluation ---------------------------------------------------------
    @property
    def has_lambda(self) -> bool:
        return any(f is not None for f in (self.A_lin, self.B_lin, self.C_lin))

    def coefficients(self, tau, lam: float = 0.0):
        """Return ``(A0, B0, C0)`` at the given tau values (batched)."""
        out = []
        for base, lin in ((self.A, self.A_lin), (self.B, self.B_lin), (self.C, self.C_lin)):
            v = base(tau)
            if lin is not None and lam != 0.0:
                v = v + lam * lin(tau)
            out.append(v)
        return tuple(out)

    def lambda_coefficients(self, tau):
        """Exact lambda-derivatives ``(A0', B0', C0')``."""
        tau = np.asarray(tau, dtype=float)
        shape = tau.shape + (self.n, self.n)
        return tuple(np.zeros(shape) if f is None else f(tau)
                     for f in (self.A_lin, self.B_lin, self.C_lin))

    def M(self, tau, lam: float = 0.0) -> np.ndarray:
        return hamiltonian_matrix(*self.coefficients(tau, lam))

    def M_lambda(self, tau) -> np.ndarray:
        return hamiltonian_matrix(*self.lambda_coefficients(tau))

    def validate(self, t: float, lams=(0.0,), samples: int = 33, tol: float = 1e-12) -> None:
        """Check symmetry of A0 and C0 on a sample of ``[0, t]``."""
        tau = np.linspace(0.0, t, samples)
        for lam in lams:
            a, b, c = self.coefficients(tau, lam)
            for name, m in (("A0", a), ("C0", c)):
                asym = np.max(np.abs(m - tr(m)))
                if asym > tol * max(1.0, np.max(np.abs(m))):
                    raise ConfigError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
                raise ConfigError("model produced non-finite coefficients")

    def stiffness(self, t: float, lam: float = 0.0, samples: int = 17) -> float:
        """Crude bound on the spectral radius of ``M0`` over ``[0, t]``."""
        m = self.M(np.linspace(0.0, t, samples), lam)
        return float(np.max(np.linalg.norm(m, ord=2, axis=(-2, -1))))

    # -- serialization ------------------------------------------------------
    def to_spec(self) -> dict:
        out = {"n": self.n, "A": self.A.to_spec(), "B": self.B.to_spec(), "C": self.C.to_spec()}
        for name in ("A_lin", "B_lin", "C_lin"):
            f = getattr(self, name)
            if f is not None:
                out[name] = f.to_spec()
        return out

    @classmethod
    def from_spec(cls, spec: dict) -> "CoefficientModel":
        n = int(spec["n"])
        get = lambda k: MatrixFunction.from_spec(spec[k], n) if k in spec else None
        zero = MatrixFunction.zeros(n)
        return cls(n, get("A") or zero, get("B") or zero, get("C") or zero,
                   get("A_lin"), get("B_lin"), get("C_lin"))


def uniform_grid(t: float, h: float, min_steps: int = 2) -> np.ndarray:
    """Uniform grid on ``[0, t]`` with an even number of steps of size <= h."""
    if not t > 0:
        raise ConfigError("horizon t must be positive")
    if not h > 0:
        raise ConfigError("step h must be positive")
    steps = max(min_steps, int(math.ceil(t / h - 1e-9)))
    steps += steps % 2
    return np.linspace(0.0, t, steps + 1)


def rk4_step_matrices(Mfun, tau: np.ndarray) -> np.ndarray:
    """RK4 propagation matrices ``R_k`` for ``y' = M(tau) y`` on the grid ``tau``.

    ``Mfun`` evaluates the (batched) system matrix.
    """
    h = np.diff(tau)[:, None, None]
    mid = 0.5 * (tau[:-1] + tau[1:])
    m0 = Mfun(tau[:-1])
    mh = Mfun(mid)
    m1 = Mfun(tau[1:])
    k1 = m0
    k2 = mh + 0.5 * h * (mh @ k1)
    k3 = mh + 0.5 * h * (mh @ k2)
    k4 = m1 + h * (m1 @ k3)
    eye = np.eye(m0.shape[-1])
    return eye + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _hermite(theta, h, y0, d0, y1, d1):
    th = theta[:, None, None]
    th2, th3 = th * th, th * th * th
    return ((2 * th3 - 3 * th2 + 1) * y0 + (th3 - 2 * th2 + th) * h * d0
            + (-2 * th3 + 3 * th2) * y1 + (th3 - th2) * h * d1)


@dataclass(frozen=True)
class FlowSolution:
    model: CoefficientModel
    lam: float
    tau: np.ndarray
    frames: np.ndarray
    derivatives: np.ndarray
    residuals: np.ndarray

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def t(self) -> float:
        return float(self.tau[-1])

    @property
    def h(self) -> float:
        return float(self.tau[1] - self.tau[0])

    @property
    def final(self) -> np.ndarray:
        return self.frames[-1]

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))

    def _check_range(self, s: np.ndarray) -> None:
        tol = 1e-12 * max(1.0, self.t)
        if np.any(s < -tol) or np.any(s > self.t + tol):
            raise ConfigError(f"time outside [0, {self.t}]")

    def frame_at(self, s, project: bool = True) -> np.ndarray:
        """Cubic Hermite dense output (with one re-projection), batched over ``s``."""
        s = np.asarray(s, dtype=float)
        shape = s.shape
        flat = s.reshape(-1)
        self._check_range(flat)
        tau = self.tau
        idx = np.clip(np.searchsorted(tau, flat, side="right") - 1, 0, tau.size - 2)
        h = tau[idx + 1] - tau[idx]
        theta = (flat - tau[idx]) / h
        out = _hermite(theta, h[:, None, None], self.frames[idx], self.derivatives[idx],
                       self.frames[idx + 1], self.derivatives[idx + 1])
        if project:
            out, _ = project_symplectic(out)
        return out.reshape(shape + out.shape[-2:])


def integrate_fundamental(model: CoefficientModel, lam: float = 0.0, t: float = 1.0,
                          h: float = 1e-3, project: bool = True,
                          max_residual: float = 1e-6) -> FlowSolution:
    """Fundamental solution ``Phi0`` on ``[0, t]`` by fixed-step RK4.

    After each step the frame is corrected by ``Phi <- Phi (I + J E / 2)``,
    ``E = Phi^T J Phi - J``.  Raises :class:`NumericalError` if the relative
    symplecticity residual exceeds ``max_residual`` anywhere.
    """
    tau = uniform_grid(t, h)
    Mfun = lambda s: model.M(s, lam)
    R = rk4_step_matrices(Mfun, tau)
    size = 2 * model.n
    frames = np.empty((tau.size, size, size))
    frames[0] = np.eye(size)
    j = J(model.n)
    phi = frames[0]
    # overflow is detected below from the stored frames
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(R.shape[0]):
            phi = R[k] @ phi
            if project:
                e = phi.T @ j @ phi - j
                phi = phi + 0.5 * (phi @ j) @ e
            frames[k + 1] = phi
    if not np.all(np.isfinite(frames)):
        raise NumericalError("integration overflowed")
    e = tr(frames) @ j @ frames - j
    scale = np.maximum(1.0, np.linalg.norm(frames, axis=(-2, -1)) ** 2)
    residuals = np.linalg.norm(e, axis=(-2, -1)) / scale
    if np.max(residuals) > max_residual:
        raise NumericalError(
            f"symplecticity residual {np.max(residuals):.3e} exceeds {max_residual:.1e}; reduce h")
    derivatives = Mfun(tau) @ frames
    return FlowSolution(model, float(lam), tau, frames, derivatives, residuals)


def propagator(flow: FlowSolution, tau: float, sigma: float) -> np.ndarray:
    """``F(tau, sigma) = Phi(tau) Phi(sigma)^{-1}``."""
    a = flow.frame_at(tau)
    b = flow.frame_at(sigma)
    return a @ _fast_inverse(b)


def cumulative_quadrature(values: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Composite Simpson running integral along axis 0, starting at 0."""
    if tau.size < 3:
        raise ConfigError("quadrature needs at least three grid points")
    return cumulative_simpson(values, x=tau, axis=0, initial=0.0)


@dataclass(frozen=True)
class SensitivityResult:
    """``M2 = dPhi/dlambda Phi^{-1}`` on the flow grid, with its bookkeeping.

    ``S2 = J M2`` has blocks ``[[A2, B2^T], [B2, C2]]``.  ``integrand`` names
    which ``G`` was integrated (``"G1"`` or ``"G4"``).
    """

    tau: np.ndarray
    M2: np.ndarray
    K0: np.ndarray
    V: np.ndarray
    G: np.ndarray
    integrand: str
    flow: FlowSolution = field(repr=False)
    left: Optional[np.ndarray] = None

    @property
    def S2(self) -> np.ndarray:
        return structure_matrix(self.M2)

    @property
    def A2(self) -> np.ndarray:
        return blocks(self.S2)[0]

    @property
    def B2(self) -> np.ndarray:
        return blocks(self.S2)[2]

    @property
    def C2(self) -> np.ndarray:
        return blocks(self.S2)[3]

    def symmetry_residual(self) -> float:
        s = self.S2
        scale = max(1.0, float(np.max(np.linalg.norm(s, axis=(-2, -1)))))
        return float(np.max(np.linalg.norm(s - tr(s), axis=(-2, -1)))) / scale

    def propagator(self, tau: float, sigma: float) -> np.ndarray:
        """``F(tau, sigma)`` of the underlying fundamental solution."""
        f = propagator(self.flow, tau, sigma)
        if self.left is not None:
            f = self.left @ f @ np.linalg.inv(self.left)
        return f


def _ensure_flow(model, lam, t, h, flow) -> FlowSolution:
    if flow is None:
        return integrate_fundamental(model, lam, t, h)
    if flow.model is not model or flow.lam != lam or abs(flow.t - t) > 1e-12 * max(1.0, t):
        raise ConfigError("supplied flow does not match (model, lambda, t)")
    return flow


def _conjugated_integral(flow: FlowSolution, G: np.ndarray) -> np.ndarray:
    """``Phi0(tau) [int_0^tau Phi0(s)^{-1} G(s) Phi0(s) ds] Phi0(tau)^{-1}`` on the grid."""
    phi = flow.frames
    inv = _fast_inverse(phi)
    inner = cumulative_quadrature(inv @ G @ phi, flow.tau)
    return phi @ inner @ inv


def lambda_sensitivity(model: CoefficientModel, lam: float, t: float, h: float = 1e-3,
                       initial_frame=None, initial_frame_derivative=None,
                       flow: Optional[FlowSolution] = None) -> SensitivityResult:
    """Variation-of-parameters sensitivity for ``Phi(tau) = Phi0(tau) Phi(0)``.

    ``initial_frame`` is ``Phi(0)`` (identity by default) and
    ``initial_frame_derivative`` its lambda-derivative (zero by default).
    ``M2 = V + int F G1 F^{-1}`` with ``V = Phi(0)' Phi(0)^{-1}`` and
    ``G1 = M1' - V M1 + M1 V``.
    """
    flow = _ensure_flow(model, lam, t, h, flow)
    size = 2 * model.n
    phi0 = np.eye(size) if initial_frame is None else np.asarray(initial_frame, dtype=float)
    dphi0 = np.zeros((size, size)) if initial_frame_derivative is None else np.asarray(
        initial_frame_derivative, dtype=float)
    if phi0.shape != (size, size) or dphi0.shape != (size, size):
        raise ConfigError("initial frame data has the wrong shape")
    phi0_inv = np.linalg.inv(phi0)
    V = dphi0 @ phi0_inv
    K0 = phi0_inv @ dphi0
    M1 = model.M(flow.tau, lam)
    G = model.M_lambda(flow.tau) - V @ M1 + M1 @ V
    M2 = V + _conjugated_integral(flow, G)
    return SensitivityResult(flow.tau, M2, K0, V, G, "G1", flow)


def _check_pair_structure(L1: np.ndarray, L2: np.ndarray, tol: float) -> None:
    both_symp = bool(is_symplectic(L1, tol)) and bool(is_symplectic(L2, tol))
    both_anti = bool(is_antisymplectic(L1, tol)) and bool(is_antisymplectic(L2, tol))
    if not (both_symp or both_anti):
        raise ConfigError("L1 and L2 must be both symplectic or both antisymplectic")


def c2_first_case(model: CoefficientModel, lam: float, t: float, L1, L2, dL2, dL1=None,
                  h: float = 1e-3, flow: Optional[FlowSolution] = None,
                  tol: float = 1e-9) -> SensitivityResult:
    """Sensitivity of ``Phi = L1 Phi0 L2`` with lambda-dependent constant L1, L2.

    ``M2 = V + int L1 F0 G4 F0^{-1} L1^{-1}`` with ``V = (L1 L2)' (L1 L2)^{-1}``,
    ``W = L2' L2^{-1}`` and ``G4 = M0' + M0 W - W M0``.  The ``C2`` attribute
    of the result is the C-block of ``J M2``.
    """
    L1 = np.asarray(L1, dtype=float)
    L2 = np.asarray(L2, dtype=float)
    dL2 = np.asarray(dL2, dtype=float)
    dL1 = np.zeros_like(L1) if dL1 is None else np.asarray(dL1, dtype=float)
    _check_pair_structure(L1, L2, tol)
    flow = _ensure_flow(model, lam, t, h, flow)
    L1_inv = np.linalg.inv(L1)
    W = dL2 @ np.linalg.inv(L2)
    V = dL1 @ L1_inv + L1 @ W @ L1_inv
    M0 = model.M(flow.tau, lam)
    G = model.M_lambda(flow.tau) + M0 @ W - W @ M0
    M2 = V + L1 @ _conjugated_integral(flow, G) @ L1_inv
    K0 = np.linalg.inv(L1 @ L2) @ (dL1 @ L2 + L1 @ dL2)
    return SensitivityResult(flow.tau, M2, K0, V, G, "G4", flow, left=L1)


def first_case_c2_integrand(X, Z, a, b, c) -> np.ndarray:
    """C-block of ``T (-J S') T^{-1}`` for symplectic ``T = [[X, Z], [W, Y]]``.

    ``S' = [[a, b^T], [b, c]]``; the result is ``X c X^T + Z a Z^T - X b Z^T - Z b^T X^T``.
    """
    return X @ c @ tr(X) + Z @ a @ tr(Z) - X @ b @ tr(Z) - Z @ tr(b) @ tr(X)


def second_case_blocks(flow: FlowSolution, alpha0, beta0):
    """``X = alpha0 Qc^T - beta0 Qs^T`` and ``Z = alpha0 Pc^T - beta0 Ps^T`` on the grid."""
    qc, qs, pc, ps = blocks(flow.frames)
    X = alpha0 @ tr(qc) - beta0 @ tr(qs)
    Z = alpha0 @ tr(pc) - beta0 @ tr(ps)
    return X, Z


def check_normalized_bc(alpha0, beta0, tol: float = 1e-9) -> None:
    n = alpha0.shape[0]
    if np.linalg.norm(alpha0 @ alpha0.T + beta0 @ beta0.T - np.eye(n)) > tol:
        raise ConfigError("alpha0 alpha0^T + beta0 beta0^T must equal I")
    if np.linalg.norm(alpha0 @ beta0.T - beta0 @ alpha0.T) > tol:
        raise ConfigError("alpha0 beta0^T must be symmetric")


def c2_second_case(model: CoefficientModel, lam: float, t: float, alpha0, beta0,
                   delta3, delta4, h: float = 1e-3,
                   flow: Optional[FlowSolution] = None) -> np.ndarray:
    """C2 for ``Phi = L1 Phi0^T L2`` with ``L1 = [[alpha0, -beta0], [beta0, alpha0]]``.

    ``L2 = [[delta, -I], [I, 0]]`` where ``delta`` moves from ``delta3`` to
    ``delta4`` with unit speed in lambda.  Returns
    ``Q1 (delta4 - delta3) Q1^T - int (Z C Z^T + X A X^T + X B^T Z^T + Z B X^T)``
    on the flow grid, with ``(A, B, C)`` the lambda-derivatives of the model.
    """
    alpha0 = np.atleast_2d(np.asarray(alpha0, dtype=float))
    beta0 = np.atleast_2d(np.asarray(beta0, dtype=float))
    delta3 = np.atleast_2d(np.asarray(delta3, dtype=float))
    delta4 = np.atleast_2d(np.asarray(delta4, dtype=float))
    for name, d in (("delta3", delta3), ("delta4", delta4)):
        if np.linalg.norm(d - d.T) > 1e-12 * max(1.0, np.linalg.norm(d)):
            raise ConfigError(f"{name} must be symmetric")
    check_normalized_bc(alpha0, beta0)
    flow = _ensure_flow(model, lam, t, h, flow)
    X, Z = second_case_blocks(flow, alpha0, beta0)
    a, b, c = model.lambda_coefficients(flow.tau)
    integrand = (Z @ c @ tr(Z) + X @ a @ tr(X) + X @ tr(b) @ tr(Z) + Z @ b @ tr(X))
    Q1 = -X
    return Q1 @ (delta4 - delta3) @ tr(Q1) - cumulative_quadrature(integrand, flow.tau)


def second_case_frame(flow: FlowSolution, alpha0, beta0, delta) -> np.ndarray:
    """``Phi = L1 Phi0^T L2`` on the flow grid (used as a cross-check)."""
    n = flow.n
    eye, zero = np.eye(n), np.zeros((n, n))
    L1 = assemble(alpha0, -beta0, beta0, alpha0)
    L2 = assemble(delta, -eye, eye, zero)
    return L1 @ tr(flow.frames) @ L2


@dataclass(frozen=True)
class BlockSolution:
    """A ``2n x n`` isotropic solution block ``Y' = M0 Y`` with column re-orthonormalization.

    ``Y[k]`` is the (orthonormalized) block at ``tau[k]`` and ``Y_next[k] = R_k Y[k]``
    the un-normalized block at ``tau[k+1]``.  Both span the same subspace as the
    true solution, which is all a Lagrangian pair depends on.
    """

    model: object
    lam: float
    tau: np.ndarray
    Y: np.ndarray
    Y_next: np.ndarray
    D: np.ndarray
    D_next: np.ndarray

    @property
    def n(self) -> int:
        return self.Y.shape[-1]

    def isotropy_residual(self) -> float:
        n = self.n
        u, w = self.Y[:, :n], self.Y[:, n:]
        return float(np.max(np.linalg.norm(tr(u) @ w - tr(w) @ u, axis=(-2, -1))))

    def block_at(self, s) -> np.ndarray:
        """Dense output (cubic Hermite inside each step), batched over ``s``."""
        s = np.asarray(s, dtype=float)
        shape = s.shape
        flat = s.reshape(-1)
        tau = self.tau
        t = tau[-1]
        if np.any(flat < -1e-12 * max(1.0, t)) or np.any(flat > t * (1 + 1e-12)):
            raise ConfigError(f"time outside [0, {t}]")
        idx = np.clip(np.searchsorted(tau, flat, side="right") - 1, 0, tau.size - 2)
        h = (tau[idx + 1] - tau[idx])[:, None, None]
        theta = (flat - tau[idx]) / h[:, 0, 0]
        out = _hermite(theta, h, self.Y[idx], self.D[idx], self.Y_next[idx], self.D_next[idx])
        return out.reshape(shape + out.shape[-2:])


def step_size_for(model, lam: float, t: float, h: float, samples: int = 17,
                  accuracy: float = 0.05) -> float:
    """Shrink ``h`` so that ``h * omega <= accuracy`` with ``omega ~ sqrt(|A||C|) + |B|``."""
    tau = np.linspace(0.0, t, samples)
    a, b, c = model.coefficients(tau, lam)
    na = np.max(np.linalg.norm(a, ord=2, axis=(-2, -1)))
    nb = np.max(np.linalg.norm(b, ord=2, axis=(-2, -1)))
    nc = np.max(np.linalg.norm(c, ord=2, axis=(-2, -1)))
    omega = math.sqrt(na * nc) + nb
    return min(h, accuracy / omega) if omega > 0 else h


def integrate_block(model, lam: float, t: float, Y0, h: float = 1e-3,
                    adapt: bool = True, renorm: int = 32) -> BlockSolution:
    """Integrate a ``2n x n`` block with RK4, re-orthonormalizing every ``renorm`` steps.

    With ``adapt`` the step keeps ``h * omega <= 0.05``, so between
    normalizations the columns grow by at most ``exp(1.6)``.
    Used when only the subspace spanned by a solution matters and the full frame
    would grow like ``exp(omega t)`` (very negative spectral parameters).
    """
    Y0 = np.asarray(Y0, dtype=float)
    n = model.n
    if Y0.shape != (2 * n, n):
        raise ConfigError("initial block must be 2n x n")
    if adapt:
        h = step_size_for(model, lam, t, h)
    tau = uniform_grid(t, h)
    Mfun = lambda s: model.M(s, lam)
    R = rk4_step_matrices(Mfun, tau)
    steps = R.shape[0]
    Y = np.empty((steps + 1, 2 * n, n))
    Y_next = np.empty((steps, 2 * n, n))
    y = np.linalg.qr(Y0)[0] if n > 1 else Y0 / np.linalg.norm(Y0)
    for k in range(steps):
        Y[k] = y
        z = R[k] @ y
        Y_next[k] = z
        if (k + 1) % renorm == 0 or k + 1 == steps:
            y = np.linalg.qr(z)[0] if n > 1 else z / math.sqrt(float(z[:, 0] @ z[:, 0]))
        else:
            y = z
    Y[steps] = y
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Y_next))):
        raise NumericalError("block integration overflowed")
    M = Mfun(tau)
    D = M @ Y
    D_next = M[1:] @ Y_next
    return BlockSolution(model, float(lam), tau, Y, Y_next, D[:-1], D_next)
