"""Boundary-condition algebra: self-adjointness, the symmetry condition, L-blocks, n = 1 families.

General two-point conditions are written

    [beta0 alpha0; beta1 alpha1] (q(0); p(0)) - [delta0 gamma0; delta1 gamma1] (q(t); p(t)) = 0

and are self-adjoint when ``Sq Sp^T`` is symmetric for
``Sq = [[beta0, delta0], [beta1, delta1]]`` and ``Sp = [[-alpha0, gamma0], [-alpha1, gamma1]]``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError
from .symplectic import J, assemble, blocks, random_symplectic, symplectic_residual

SELFADJOINT_TOL = 1e-9


def _rel(m: np.ndarray, scale: float) -> float:
    return float(np.linalg.norm(m)) / max(1.0, scale)


@dataclass(frozen=True)
class BCQuadruple:
    alpha0: np.ndarray
    beta0: np.ndarray
    gamma0: np.ndarray
    delta0: np.ndarray
    alpha1: np.ndarray
    beta1: np.ndarray
    gamma1: np.ndarray
    delta1: np.ndarray

    def __post_init__(self):
        shape = None
        for f in fields(self):
            m = np.atleast_2d(np.asarray(getattr(self, f.name), dtype=float))
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigError(f"{f.name} must be a square matrix")
            if shape is not None and m.shape != shape:
                raise ConfigError("all boundary blocks must have the same size")
            shape = m.shape
            object.__setattr__(self, f.name, m)

    @property
    def n(self) -> int:
        return self.alpha0.shape[0]

    def row(self, j: int):
        """``(alpha_j, beta_j, gamma_j, delta_j)``."""
        if j == 0:
            return self.alpha0, self.beta0, self.gamma0, self.delta0
        if j == 1:
            return self.alpha1, self.beta1, self.gamma1, self.delta1
        raise ConfigError("row index must be 0 or 1")

    @property
    def Sq(self) -> np.ndarray:
        return np.block([[self.beta0, self.delta0], [self.beta1, self.delta1]])

    @property
    def Sp(self) -> np.ndarray:
        return np.block([[-self.alpha0, self.gamma0], [-self.alpha1, self.gamma1]])

    def scale(self) -> float:
        return max(float(np.linalg.norm(self.Sq)), float(np.linalg.norm(self.Sp)))

    @classmethod
    def from_S(cls, Sq, Sp) -> "BCQuadruple":
        Sq = np.asarray(Sq, dtype=float)
        Sp = np.asarray(Sp, dtype=float)
        b0, d0, b1, d1 = blocks(Sq)
        ma0, g0, ma1, g1 = blocks(Sp)
        return cls(-ma0, b0, g0, d0, -ma1, b1, g1, d1)

    @classmethod
    def separated(cls, alpha0, beta0, gamma1, delta1) -> "BCQuadruple":
        """``beta0 q(0) + alpha0 p(0) = 0`` and ``delta1 q(t) + gamma1 p(t) = 0``."""
        a = np.atleast_2d(np.asarray(alpha0, dtype=float))
        z = np.zeros_like(a)
        return cls(a, beta0, z, z, z, z, gamma1, delta1)

    def to_spec(self) -> dict:
        return {f.name: getattr(self, f.name).tolist() for f in fields(self)}

    @classmethod
    def from_spec(cls, spec: dict, n: Optional[int] = None) -> "BCQuadruple":
        names = [f.name for f in fields(cls)]
        missing = [k for k in names if k not in spec]
        if missing and n is None:
            raise ConfigError(f"missing boundary blocks: {missing}")
        vals = {k: spec[k] if k in spec else np.zeros((n, n)) for k in names}
        return cls(**vals)


def random_selfadjoint_bc(n: int, seed=None, scale: float = 1.0) -> BCQuadruple:
    """Self-adjoint conditions from the top block row of a random symplectic ``4n x 4n`` matrix.

    That row ``(X, Y)`` has ``X Y^T`` symmetric and full rank, and is used as ``(Sq, Sp)``.
    """
    phi = random_symplectic(2 * n, seed=seed, scale=scale)
    X, Y, _, _ = blocks(phi)
    return BCQuadruple.from_S(X, Y)


@dataclass(frozen=True)
class SelfAdjointReport:
    ok: bool
    residuals: tuple

    def __bool__(self) -> bool:
        return self.ok


def check_selfadjoint(bc: BCQuadruple, tol: float = SELFADJOINT_TOL) -> SelfAdjointReport:
    """Residuals of the three block equations equivalent to ``Sq Sp^T = Sp Sq^T``."""
    a0, b0, g0, d0 = bc.row(0)
    a1, b1, g1, d1 = bc.row(1)
    r = (
        a0 @ b0.T + d0 @ g0.T - b0 @ a0.T - g0 @ d0.T,
        a1 @ b1.T + d1 @ g1.T - b1 @ a1.T - g1 @ d1.T,
        a0 @ b1.T + d0 @ g1.T - b0 @ a1.T - g0 @ d1.T,
    )
    scale = bc.scale() ** 2
    res = tuple(_rel(m, scale) for m in r)
    return SelfAdjointReport(max(res) <= tol, res)


def condition_b_matrix(bc: BCQuadruple, phi0: np.ndarray, j: int) -> np.ndarray:
    """``[delta_j gamma_j] Phi0 [-alpha_j beta_j]^T + beta_j alpha_j^T + delta_j gamma_j^T``."""
    a, b, g, d = bc.row(j)
    left = np.hstack([d, g])
    right = np.hstack([-a, b]).T
    return left @ phi0 @ right + b @ a.T + d @ g.T


@dataclass(frozen=True)
class ConditionBReport:
    ok: bool
    residuals: tuple

    def __bool__(self) -> bool:
        return self.ok


def check_condition_b(bc: BCQuadruple, phi0, tol: float = SELFADJOINT_TOL) -> ConditionBReport:
    """Symmetry residual of the condition-(b) expression for ``j = 0, 1`` at one ``Phi0``."""
    phi0 = np.asarray(phi0, dtype=float)
    if phi0.shape != (2 * bc.n, 2 * bc.n):
        raise ConfigError("Phi0 has the wrong size")
    if symplectic_residual(phi0) > 1e-9:
        raise ConfigError("Phi0 must be symplectic")
    res = []
    for j in (0, 1):
        m = condition_b_matrix(bc, phi0, j)
        res.append(_rel(m - m.T, float(np.linalg.norm(m))))
    return ConditionBReport(max(res) <= tol, tuple(res))


def antisymmetric_basis(n: int) -> list:
    out = []
    for i, k in itertools.combinations(range(n), 2):
        g = np.zeros((n, n))
        g[i, k], g[k, i] = 1.0, -1.0
        out.append(g)
    return out


def check_proposition(bc: BCQuadruple, tol: float = SELFADJOINT_TOL) -> bool:
    """Criterion for condition (b) at every symplectic ``Phi0``.

    ``beta_j alpha_j^T + delta_j gamma_j^T`` symmetric, and
    ``beta_j G delta_j^T``, ``beta_j G gamma_j^T``, ``delta_j G alpha_j^T``,
    ``gamma_j G alpha_j^T`` vanish for every antisymmetric ``G``.  Linearity
    reduces the last part to a basis of antisymmetric matrices.
    """
    scale = bc.scale() ** 2
    basis = antisymmetric_basis(bc.n)
    for j in (0, 1):
        a, b, g, d = bc.row(j)
        s = b @ a.T + d @ g.T
        if _rel(s - s.T, scale) > tol:
            return False
        for G in basis:
            for m in (b @ G @ d.T, b @ G @ g.T, d @ G @ a.T, g @ G @ a.T):
                if _rel(m, scale) > tol:
                    return False
    return True


@dataclass(frozen=True)
class DetLemmaReport:
    det_N: float
    det_reduced: float
    residual: float

    @property
    def ok(self) -> bool:
        return self.residual <= 1e-8


def det_lemma_check(a, b, c, d, tol: float = 1e-10) -> DetLemmaReport:
    """``(det N)^2`` against ``det(a d^T - b c^T)^2`` for ``N = [[a, b], [c, d]]``.

    Requires ``a b^T`` and ``c d^T`` symmetric.  ``residual`` is relative to the
    larger of the two squared determinants (or 1).
    """
    a, b, c, d = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (a, b, c, d))
    scale = max(1.0, *(float(np.linalg.norm(m)) for m in (a, b, c, d))) ** 2
    if _rel(a @ b.T - b @ a.T, scale) > tol or _rel(c @ d.T - d @ c.T, scale) > tol:
        raise ConfigError("lemma hypotheses a b^T = b a^T and c d^T = d c^T fail")
    det_n = float(np.linalg.det(np.block([[a, b], [c, d]])))
    det_r = float(np.linalg.det(a @ d.T - b @ c.T))
    res = abs(det_n**2 - det_r**2) / max(1.0, det_n**2, det_r**2)
    return DetLemmaReport(det_n, det_r, res)


@dataclass(frozen=True)
class LBlocks:
    """``Phi = L0 + L1 Phi0 L2 + L3 Phi0^T L4`` whose (1,1) block is ``R0 (a d^T - b c^T) R1^T``.

    Only the blocks that enter the (1,1) entry are populated: the first block
    row of ``L0, L1, L3`` and the first block column of ``L2, L4``.
    """

    L0: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L3: np.ndarray
    L4: np.ndarray
    R0: np.ndarray
    R1: np.ndarray
    l0_identity_residual: float = field(default=0.0)

    def apply(self, phi0: np.ndarray) -> np.ndarray:
        return self.L0 + self.L1 @ phi0 @ self.L2 + self.L3 @ phi0.T @ self.L4

    def to_spec(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("L0", "L1", "L2", "L3", "L4", "R0", "R1")}


def reduced_blocks(bc: BCQuadruple, phi0: np.ndarray):
    """``(a, b, c, d)`` of the determinant condition at ``Phi0(t)``."""
    qc, qs, pc, ps = blocks(np.asarray(phi0, dtype=float))
    a = bc.beta0 - bc.delta0 @ qc - bc.gamma0 @ pc
    d = bc.alpha1 - bc.delta1 @ qs - bc.gamma1 @ ps
    b = bc.alpha0 - bc.delta0 @ qs - bc.gamma0 @ ps
    c = bc.beta1 - bc.delta1 @ qc - bc.gamma1 @ pc
    return a, b, c, d


def build_L_blocks(bc: BCQuadruple, R0=None, R1=None, cond_max: float = 1e12) -> LBlocks:
    n = bc.n
    R0 = np.eye(n) if R0 is None else np.atleast_2d(np.asarray(R0, dtype=float))
    R1 = np.eye(n) if R1 is None else np.atleast_2d(np.asarray(R1, dtype=float))
    for name, r in (("R0", R0), ("R1", R1)):
        if r.shape != (n, n):
            raise ConfigError(f"{name} must be {n} x {n}")
        if np.linalg.cond(r) > cond_max:
            raise ConfigError(f"{name} must be invertible")
    a0, b0, g0, d0 = bc.row(0)
    a1, b1, g1, d1 = bc.row(1)
    z = np.zeros((n, n))
    L0 = assemble(R0 @ (b0 @ a1.T - a0 @ b1.T + d0 @ g1.T - g0 @ d1.T) @ R1.T, z, z, z)
    L1 = assemble(R0 @ d0, R0 @ g0, z, z)
    L2 = assemble(-a1.T @ R1.T, z, b1.T @ R1.T, z)
    L3 = assemble(R0 @ a0, -R0 @ b0, z, z)
    L4 = assemble(d1.T @ R1.T, z, g1.T @ R1.T, z)
    alt = 2 * R0 @ (d0 @ g1.T - g0 @ d1.T) @ R1.T
    scale = max(1.0, float(np.linalg.norm(L0)), float(np.linalg.norm(alt)))
    resid = float(np.linalg.norm(blocks(L0)[0] - alt)) / scale
    return LBlocks(L0, L1, L2, L3, L4, R0, R1, resid)


def q2_direct(bc: BCQuadruple, phi0, R0=None, R1=None) -> np.ndarray:
    n = bc.n
    R0 = np.eye(n) if R0 is None else np.atleast_2d(np.asarray(R0, dtype=float))
    R1 = np.eye(n) if R1 is None else np.atleast_2d(np.asarray(R1, dtype=float))
    a, b, c, d = reduced_blocks(bc, phi0)
    return R0 @ (a @ d.T - b @ c.T) @ R1.T


# ---------------------------------------------------------------------------
# n = 1 affine families


def family_symplectic_residual(L0, L1, L2, samples: int = 100, seed: int = 0,
                               transpose: bool = False, scale: float = 1.0) -> float:
    """Worst symplecticity residual of ``L0 + L1 Phi L2`` over seeded random symplectic ``Phi``."""
    L0, L1, L2 = (np.asarray(m, dtype=float) for m in (L0, L1, L2))
    n = L0.shape[0] // 2
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=samples)
    worst = 0.0
    for s in seeds:
        phi = random_symplectic(n, seed=int(s), scale=scale)
        if transpose:
            phi = phi.T
        worst = max(worst, symplectic_residual(L0 + L1 @ phi @ L2))
    return worst


@dataclass(frozen=True)
class NecessaryConditions:
    det_residual: float
    cross_residual: float

    def holds(self, tol: float = 1e-9) -> bool:
        return self.det_residual <= tol and self.cross_residual <= tol


def necessary_conditions(L0, L1, L2) -> NecessaryConditions:
    """``det L0 + det L1 det L2 - 1`` and ``||L1^T J L0 J L2^T||`` (n = 1)."""
    L0, L1, L2 = (np.asarray(m, dtype=float) for m in (L0, L1, L2))
    if L0.shape != (2, 2) or L1.shape != (2, 2) or L2.shape != (2, 2):
        raise ConfigError("appendix families are 2 x 2")
    j = J(1)
    det_res = abs(np.linalg.det(L0) + np.linalg.det(L1) * np.linalg.det(L2) - 1.0)
    cross = float(np.linalg.norm(L1.T @ j @ L0 @ j @ L2.T))
    return NecessaryConditions(float(det_res), cross)


@dataclass(frozen=True)
class Classification:
    case: str
    det_L0: float
    det_L1: float
    det_L2: float
    conditions: NecessaryConditions
    family_residual: float


def appendix_classify(L0, L1, L2, tol: float = 1e-9, samples: int = 100,
                      seed: int = 0) -> Classification:
    """Case ``a``, ``b`` or ``c`` of a 2 x 2 family ``L0 + L1 Phi L2`` that is always symplectic."""
    L0, L1, L2 = (np.asarray(m, dtype=float) for m in (L0, L1, L2))
    cond = necessary_conditions(L0, L1, L2)
    fam = family_symplectic_residual(L0, L1, L2, samples, seed)
    if fam > tol:
        raise ConfigError(f"family is not symplectic for all Phi (residual {fam:.3e})")
    if not cond.holds(tol):
        raise NumericalError("family passed the random test but violates a necessary condition")
    d0, d1, d2 = (float(np.linalg.det(m)) for m in (L0, L1, L2))
    zero = lambda m: float(np.linalg.norm(m)) <= tol
    l0_sympl = symplectic_residual(L0) <= tol
    if zero(L0) and abs(d1 * d2 - 1.0) <= tol:
        case = "c"
    elif l0_sympl and (zero(L1) or zero(L2)):
        case = "b"
    elif l0_sympl and abs(d1) <= tol and abs(d2) <= tol:
        case = "a"
    else:
        raise NumericalError("family fits none of the cases a, b, c")
    return Classification(case, d0, d1, d2, cond, fam)


@dataclass(frozen=True)
class AffineFamily1D:
    x: tuple
    case: str
    a: float
    b: float
    c: float
    nu: int
    R: float = 1.0


def compute_x(bc: BCQuadruple, R: float = 1.0, tol: float = 1e-12) -> tuple:
    """``(x0, ..., x4)`` of the (1,1) entry as an affine function of ``Phi`` (n = 1).

    Raises :class:`ConfigError` if ``x1 x4 - x2 x3 = x0^2 / 4`` fails, which
    happens exactly when the conditions are not self-adjoint.
    """
    if bc.n != 1:
        raise ConfigError("compute_x needs scalar boundary data")
    if R == 0:
        raise ConfigError("R must be nonzero")
    a0, b0, g0, d0 = (float(m[0, 0]) for m in bc.row(0))
    a1, b1, g1, d1 = (float(m[0, 0]) for m in bc.row(1))
    x0 = R * (b0 * a1 - a0 * b1 + d0 * g1 - g0 * d1)
    x1 = R * (a0 * d1 - d0 * a1)
    x2 = R * (d0 * b1 - b0 * d1)
    x3 = R * (a0 * g1 - g0 * a1)
    x4 = R * (g0 * b1 - b0 * g1)
    scale = max(1.0, x0 * x0, abs(x1 * x4), abs(x2 * x3))
    if abs(x1 * x4 - x2 * x3 - 0.25 * x0 * x0) > tol * scale:
        raise ConfigError("x1 x4 - x2 x3 != x0^2 / 4: boundary conditions are not self-adjoint")
    return x0, x1, x2, x3, x4


CASES = ("a", "b", "c", "d", "e")


def _check_case(case: str, x, tol: float) -> None:
    x0, x1, x2, x3, x4 = x
    z = lambda v: abs(v) <= tol
    if not z(x0):
        raise ConfigError("the table requires x0 = 0")
    ok = {
        "a": not z(x1),
        "b": z(x1) and not z(x4) and z(x3),
        "c": z(x1) and not z(x4) and z(x2),
        "d": z(x1) and z(x4) and z(x2) and not z(x3),
        "e": z(x1) and z(x4) and z(x3) and not z(x2),
    }[case]
    if not ok:
        raise ConfigError(f"x values do not satisfy the constraints of case {case}")


def appendix_construct(case: str, x, a: float, b: float = 0.0, c: float = 0.0, nu: int = 1,
                       tol: float = 1e-12):
    """``(L1, L2)`` from the n = 1 table with ``L1 Phi L2`` having (1,1) entry ``sum x_i Phi_i``.

    Both factors have determinant ``nu``: symplectic for ``nu = 1`` and
    antisymplectic for ``nu = -1``.  Case ``d`` also needs ``x3 != 0`` and
    case ``e`` needs ``x2 != 0`` (their tables divide by them).
    """
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}")
    if nu not in (1, -1):
        raise ConfigError("nu must be +1 or -1")
    if a == 0:
        raise ConfigError("a must be nonzero")
    x = tuple(float(v) for v in x)
    if len(x) != 5:
        raise ConfigError("need x0 .. x4")
    _check_case(case, x, tol)
    _, x1, x2, x3, x4 = x
    ia = 1.0 / a
    if case == "a":
        L1 = [[a, a * x3 / x1], [b, nu * ia + b * x3 / x1]]
        L2 = [[ia * x1, c], [ia * x2, nu * a / x1 + c * x2 / x1]]
    elif case == "b":
        L1 = [[a * x2 / x4, a], [-nu * ia + b * x2 / x4, b]]
        L2 = [[0.0, -nu * a / x4], [ia * x4, c]]
    elif case == "c":
        L1 = [[0.0, a], [-nu * ia, b]]
        L2 = [[ia * x3, -nu * a / x4 + c * x3 / x4], [ia * x4, c]]
    elif case == "d":
        L1 = [[0.0, a], [-nu * ia, b]]
        L2 = [[ia * x3, c], [0.0, nu * a / x3]]
    else:
        L1 = [[a, 0.0], [b, nu * ia]]
        L2 = [[0.0, -nu * a / x2], [ia * x2, c]]
    return np.array(L1, dtype=float), np.array(L2, dtype=float)


def affine_coefficients(L1, L2) -> tuple:
    """``(x1, x2, x3, x4)`` with ``(L1 Phi L2)_11 = x1 Phi11 + x2 Phi12 + x3 Phi21 + x4 Phi22``."""
    L1, L2 = np.asarray(L1, dtype=float), np.asarray(L2, dtype=float)
    r, col = L1[0], L2[:, 0]
    return (r[0] * col[0], r[0] * col[1], r[1] * col[0], r[1] * col[1])


def random_scalar_selfadjoint(rng: np.random.Generator) -> BCQuadruple:
    """Scalar self-adjoint conditions with the mixed equation solved for ``beta1``."""
    a0, b0, g0, d0, a1, g1, d1 = rng.standard_normal(7)
    while abs(a0) < 0.1:
        a0 = rng.standard_normal()
    b1 = (b0 * a1 + g0 * d1 - d0 * g1) / a0
    return BCQuadruple(a0, b0, g0, d0, a1, b1, g1, d1)


def random_x_for_case(case: str, rng: np.random.Generator) -> tuple:
    """Random ``x`` satisfying the constraints of ``case`` with ``x0 = 0`` and ``x1 x4 = x2 x3``."""
    nz = lambda: float(rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0))
    if case == "a":
        x1, x2, x3 = nz(), float(rng.standard_normal()), float(rng.standard_normal())
        return 0.0, x1, x2, x3, x2 * x3 / x1
    if case == "b":
        return 0.0, 0.0, float(rng.standard_normal()), 0.0, nz()
    if case == "c":
        return 0.0, 0.0, 0.0, float(rng.standard_normal()), nz()
    if case == "d":
        return 0.0, 0.0, 0.0, nz(), 0.0
    if case == "e":
        return 0.0, 0.0, nz(), 0.0, 0.0
    raise ConfigError(f"unknown case {case!r}")
