"""Small dense symplectic algebra.

Conventions: a 2n x 2n frame is written in n x n blocks as

    Phi = [[Q2, Q1],
           [P2, P1]]

with ``J = [[0, -I], [I, 0]]``, ``S = [[A, B^T], [B, C]]`` and ``M = -J S`` so
that ``Phi' = M Phi`` is the linear Hamiltonian system
``Q' = B Q + C P, P' = -A Q - B^T P``.  Every function here is pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, NumericalError, SymplecticityError

DEFAULT_TOL = 1e-9
COND_MAX = 1e12


def J(n: int) -> np.ndarray:
    z = np.zeros((n, n))
    eye = np.eye(n)
    return np.block([[z, -eye], [eye, z]])


def _half(m: np.ndarray) -> int:
    size = m.shape[-1]
    if m.shape[-2] != size:
        raise ConfigError(f"expected square matrix, got shape {m.shape}")
    if size % 2:
        raise ConfigError(f"expected even order, got {size}")
    return size // 2


def blocks(m: np.ndarray):
    """Split ``(..., 2n, 2n)`` into its four ``n x n`` blocks (11, 12, 21, 22)."""
    n = _half(m)
    return m[..., :n, :n], m[..., :n, n:], m[..., n:, :n], m[..., n:, n:]


def assemble(b11, b12, b21, b22) -> np.ndarray:
    top = np.concatenate([b11, b12], axis=-1)
    bottom = np.concatenate([b21, b22], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def tr(m: np.ndarray) -> np.ndarray:
    """Transpose of the trailing two axes."""
    return np.swapaxes(m, -1, -2)


def hamiltonian_matrix(A, B, C) -> np.ndarray:
    """``M = -J S`` for ``S = [[A, B^T], [B, C]]``, i.e. ``[[B, C], [-A, -B^T]]``."""
    A, B, C = (np.asarray(x, dtype=float) for x in (A, B, C))
    return assemble(B, C, -A, -tr(B))


def structure_matrix(M: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hamiltonian_matrix` at the 2n x 2n level: ``S = J M``."""
    m11, m12, m21, m22 = blocks(M)
    return assemble(-m21, -m22, m11, m12)


def coefficient_blocks(M: np.ndarray):
    """Return ``(A, B, C)`` with ``M = -J S``; B is read off the (2,1) block of S."""
    S = structure_matrix(M)
    s11, _, s21, s22 = blocks(S)
    return s11, s21, s22


@dataclass(frozen=True)
class IsotropicPair:
    """A matrix solution ``(Q, P)`` of the Hamiltonian system."""

    Q: np.ndarray
    P: np.ndarray

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def isotropy_residual(self) -> float:
        return float(np.linalg.norm(self.P.T @ self.Q - self.Q.T @ self.P))


@dataclass(frozen=True)
class SymplecticFrame:
    Q2: np.ndarray
    Q1: np.ndarray
    P2: np.ndarray
    P1: np.ndarray

    @classmethod
    def from_matrix(cls, phi: np.ndarray) -> "SymplecticFrame":
        phi = np.asarray(phi, dtype=float)
        q2, q1, p2, p1 = blocks(phi)
        return cls(q2.copy(), q1.copy(), p2.copy(), p1.copy())

    @property
    def n(self) -> int:
        return self.Q2.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return assemble(self.Q2, self.Q1, self.P2, self.P1)

    @property
    def first(self) -> IsotropicPair:
        """The column-block solution ``(Q1, P1)``."""
        return IsotropicPair(self.Q1, self.P1)

    @property
    def second(self) -> IsotropicPair:
        return IsotropicPair(self.Q2, self.P2)

    def inverse(self) -> "SymplecticFrame":
        return SymplecticFrame.from_matrix(symplectic_inverse(self.matrix))


def wronskian(sol1: IsotropicPair, sol2: IsotropicPair) -> np.ndarray:
    """``W = P1^T Q2 - Q1^T P2`` for ``sol1 = (Q1, P1)`` and ``sol2 = (Q2, P2)``."""
    if sol1.Q.shape != sol2.Q.shape or sol1.P.shape != sol2.P.shape:
        raise ConfigError("dimension mismatch between the two solutions")
    return sol1.P.T @ sol2.Q - sol1.Q.T @ sol2.P


@dataclass(frozen=True)
class StructureCheck:
    ok: bool
    residual: float
    residual_transposed: float

    def __bool__(self) -> bool:
        return self.ok


def _scale(m: np.ndarray) -> float:
    # the residual is quadratic in the matrix
    return max(1.0, float(np.linalg.norm(m)) ** 2)


def symplectic_residual(phi: np.ndarray) -> float:
    """Relative residual ``||Phi^T J Phi - J|| / max(1, ||Phi||^2)`` (Frobenius)."""
    phi = np.asarray(phi, dtype=float)
    j = J(_half(phi))
    return float(np.linalg.norm(phi.T @ j @ phi - j)) / _scale(phi)


def is_symplectic(phi, tol: float = DEFAULT_TOL) -> StructureCheck:
    phi = np.asarray(phi, dtype=float)
    j = J(_half(phi))
    r = symplectic_residual(phi)
    rt = float(np.linalg.norm(phi @ j @ phi.T - j)) / _scale(phi)
    return StructureCheck(r <= tol, r, rt)


def is_antisymplectic(L, tol: float = DEFAULT_TOL) -> StructureCheck:
    L = np.asarray(L, dtype=float)
    j = J(_half(L))
    r = float(np.linalg.norm(L @ j @ L.T + j)) / _scale(L)
    rt = float(np.linalg.norm(L.T @ j @ L + j)) / _scale(L)
    return StructureCheck(r <= tol, r, rt)


def symplectic_inverse(phi, tol: float = DEFAULT_TOL):
    """``Phi^{-1} = -J Phi^T J``, i.e. blocks ``[[P1^T, -Q1^T], [-P2^T, Q2^T]]``.

    Accepts a raw matrix or a :class:`SymplecticFrame` and returns the same kind.
    """
    if isinstance(phi, SymplecticFrame):
        return phi.inverse()
    phi = np.asarray(phi, dtype=float)
    check = is_symplectic(phi, tol)
    if not check:
        raise SymplecticityError(f"frame is not symplectic (residual {check.residual:.3e})")
    return _fast_inverse(phi)


def _fast_inverse(phi: np.ndarray) -> np.ndarray:
    """Unchecked symplectic inverse; works on stacks ``(..., 2n, 2n)``."""
    q2, q1, p2, p1 = blocks(phi)
    return assemble(tr(p1), -tr(q1), -tr(p2), tr(q2))


def guarded_inv(m: np.ndarray, cond_max: float = COND_MAX) -> np.ndarray:
    """Matrix inverse that refuses ill-conditioned input."""
    m = np.asarray(m, dtype=float)
    c = np.linalg.cond(m)
    if not np.isfinite(c) or c > cond_max:
        raise NumericalError(f"matrix too ill-conditioned to invert (cond {c:.3e})")
    return np.linalg.inv(m)


def frame_identities(phi: np.ndarray, cond_max: float = 1e8) -> dict[str, float]:
    """Residuals of the block identities satisfied by a symplectic frame.

    The quotients such as ``P2 Q2^{-1}`` are only included when the factor being
    inverted has condition number below ``cond_max``.
    """
    q2, q1, p2, p1 = blocks(np.asarray(phi, dtype=float))
    eye = np.eye(q2.shape[0])
    out = {
        "P1'Q2 - Q1'P2 = I": np.linalg.norm(p1.T @ q2 - q1.T @ p2 - eye),
        "P1'Q1 sym": np.linalg.norm(p1.T @ q1 - q1.T @ p1),
        "P2'Q2 sym": np.linalg.norm(p2.T @ q2 - q2.T @ p2),
        "P1Q2' - P2Q1' = I": np.linalg.norm(p1 @ q2.T - p2 @ q1.T - eye),
        "Q1Q2' sym": np.linalg.norm(q1 @ q2.T - q2 @ q1.T),
        "P1P2' sym": np.linalg.norm(p1 @ p2.T - p2 @ p1.T),
        "Q2'P1 - P2'Q1 = I": np.linalg.norm(q2.T @ p1 - p2.T @ q1 - eye),
        "Q2P1' - Q1P2' = I": np.linalg.norm(q2 @ p1.T - q1 @ p2.T - eye),
    }
    quotients = {
        "P2 Q2^-1": (p2, q2, "right"),
        "Q1 P1^-1": (q1, p1, "right"),
        "Q2 P2^-1": (q2, p2, "right"),
        "P1 Q1^-1": (p1, q1, "right"),
        "Q2^-1 Q1": (q1, q2, "left"),
        "P2^-1 P1": (p1, p2, "left"),
        "Q1^-1 Q2": (q2, q1, "left"),
        "P1^-1 P2": (p2, p1, "left"),
    }
    for name, (num, den, side) in quotients.items():
        if np.linalg.cond(den) >= cond_max:
            continue
        inv = np.linalg.inv(den)
        x = num @ inv if side == "right" else inv @ num
        out[name + " sym"] = np.linalg.norm(x - x.T) / max(1.0, np.linalg.norm(x))
    return {k: float(v) for k, v in out.items()}


def recover_coefficients(phi, dphi, tol: float = 1e-6):
    """Recover ``(A, B, C)`` from frame samples and their time derivatives.

    Uses ``A = P1' P2^T - P2' P1^T``, ``C = Q1' Q2^T - Q2' Q1^T`` and
    ``B = -Q1' P2^T + Q2' P1^T`` (primes are time derivatives). Works on single
    frames or stacks. Raises :class:`ConfigError` when ``dPhi J Phi^T`` is not
    symmetric to ``tol`` (relative), which means the derivative data does not
    come from a Hamiltonian flow.
    """
    phi = np.asarray(phi, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    if phi.shape != dphi.shape:
        raise ConfigError("frame and derivative shapes differ")
    n = _half(phi)
    m = dphi @ J(n) @ tr(phi)
    asym = np.linalg.norm(m - tr(m), axis=(-2, -1))
    scale = np.maximum(1.0, np.linalg.norm(phi, axis=(-2, -1)) * np.linalg.norm(dphi, axis=(-2, -1)))
    if np.any(asym > tol * scale):
        raise ConfigError(f"dPhi J Phi^T not symmetric (max rel residual {np.max(asym / scale):.3e})")
    q2, q1, p2, p1 = blocks(phi)
    dq2, dq1, dp2, dp1 = blocks(dphi)
    A = dp1 @ tr(p2) - dp2 @ tr(p1)
    C = dq1 @ tr(q2) - dq2 @ tr(q1)
    B = -dq1 @ tr(p2) + dq2 @ tr(p1)
    return A, B, C


def random_symmetric(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    x = rng.standard_normal((n, n))
    return scale * (x + x.T) / 2


def random_symplectic(n: int, seed=None, scale: float = 1.0, factors: int = 3) -> np.ndarray:
    """Product of ``factors`` exponentials ``exp(-J S_i)`` with random symmetric ``S_i``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    j = J(n)
    out = np.eye(2 * n)
    for _ in range(factors):
        out = out @ expm(-j @ random_symmetric(rng, 2 * n, scale))
    return out


def random_antisymplectic(n: int, seed=None, scale: float = 1.0) -> np.ndarray:
    """``diag(I, -I)`` times a random symplectic matrix."""
    flip = np.diag(np.r_[np.ones(n), -np.ones(n)])
    return flip @ random_symplectic(n, seed, scale)


def project_symplectic(phi: np.ndarray):
    """One first-order correction ``Phi (I + J E / 2)`` with ``E = Phi^T J Phi - J``.

    Works on a single frame or a stack. Returns the corrected frame(s) and
    ``||E||`` of the input (a float, or an array for stacks).
    """
    phi = np.asarray(phi, dtype=float)
    j = J(_half(phi))
    e = tr(phi) @ j @ phi - j
    out = phi + 0.5 * (phi @ j) @ e
    norms = np.linalg.norm(e, axis=(-2, -1))
    return out, (float(norms) if norms.ndim == 0 else norms)
