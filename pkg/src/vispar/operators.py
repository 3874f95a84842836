"""Uniformly elliptic operators F(M) and gradient degeneracy profiles g(p).

All evaluations are vectorised: a matrix argument has shape (..., n, n) and a
gradient argument has shape (..., n).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SingularEvaluationError",
    "OperatorKind",
    "EllipticOperator",
    "DegeneracyMode",
    "DegeneracyProfile",
    "symmetric",
    "sym_eigenvalues",
    "pucci_plus",
    "pucci_minus",
    "evaluate_operator",
    "degeneracy",
    "degeneracy_of_norm",
    "degeneracy_slope",
    "rhs",
    "scaled_operator",
]

# eigenvalues this small count as zero in the Pucci split
EIG_TIE = 1e-14


class SingularEvaluationError(ArithmeticError):
    """|p|^gamma with gamma < 0 was requested at p = 0."""


def symmetric(entries) -> np.ndarray:
    """Build a symmetric matrix (or stack) and check the symmetry."""
    m = np.array(entries, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.shape[-1] != m.shape[-2]:
        raise ValueError("matrix must be square")
    if not np.allclose(m, np.swapaxes(m, -1, -2), rtol=0, atol=1e-14):
        raise ValueError("matrix is not symmetric")
    return m


def sym_eigenvalues(m: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of symmetric 1x1 / 2x2 matrices, shape (..., n)."""
    m = np.asarray(m, float)
    n = m.shape[-1]
    if n == 1:
        return m[..., 0, :].copy()
    if n == 2:
        a, b, c = m[..., 0, 0], m[..., 0, 1], m[..., 1, 1]
        mean = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return np.stack([mean - rad, mean + rad], axis=-1)
    return np.linalg.eigvalsh(m)


def _split(eig: np.ndarray):
    eig = np.where(np.abs(eig) <= EIG_TIE, 0.0, eig)
    return np.clip(eig, 0, None).sum(-1), np.clip(eig, None, 0).sum(-1)


def pucci_plus(m, lam: float, Lam: float) -> np.ndarray:
    """sup of tr(AM) over lam I <= A <= Lam I."""
    _check_constants(lam, Lam)
    pos, neg = _split(sym_eigenvalues(m))
    return Lam * pos + lam * neg


def pucci_minus(m, lam: float, Lam: float) -> np.ndarray:
    """inf of tr(AM) over lam I <= A <= Lam I."""
    _check_constants(lam, Lam)
    pos, neg = _split(sym_eigenvalues(m))
    return lam * pos + Lam * neg


def _check_constants(lam, Lam):
    if not (lam > 0 and Lam >= lam):
        raise ValueError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")


class OperatorKind(enum.Enum):
    PUCCI_PLUS = "pucci_plus"
    PUCCI_MINUS = "pucci_minus"
    LINEAR_TRACE = "linear_trace"
    SMOOTH_BELLMAN = "smooth_bellman"


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """F : S^n -> R with F(0) = 0 and ellipticity constants (lam, Lam).

    ``scale`` s turns F into M -> F(s M) / s, which keeps (lam, Lam).
    SmoothBellman is theta * log sum_k exp(tr(A_k M) / theta) minus its value at 0.
    """

    kind: OperatorKind
    lam: float
    Lam: float
    dim: int
    matrices: tuple = ()
    theta: float = 0.0
    scale: float = 1.0
    offset: float = 0.0

    # -- constructors -------------------------------------------------------
    @classmethod
    def pucci(cls, lam: float, Lam: float, dim: int, sign: int = +1) -> "EllipticOperator":
        _check_constants(lam, Lam)
        kind = OperatorKind.PUCCI_PLUS if sign > 0 else OperatorKind.PUCCI_MINUS
        return cls(kind, float(lam), float(Lam), int(dim))

    @classmethod
    def linear(cls, a, lam: float | None = None, Lam: float | None = None) -> "EllipticOperator":
        a = symmetric(a)
        eig = sym_eigenvalues(a)
        lam = float(eig.min()) if lam is None else float(lam)
        Lam = float(eig.max()) if Lam is None else float(Lam)
        _check_constants(lam, Lam)
        if eig.min() < lam - 1e-12 or eig.max() > Lam + 1e-12:
            raise ValueError("coefficient matrix violates lam I <= A <= Lam I")
        return cls(OperatorKind.LINEAR_TRACE, lam, Lam, a.shape[0], (a,))

    @classmethod
    def smooth_bellman(cls, matrices, theta: float, lam: float | None = None,
                       Lam: float | None = None) -> "EllipticOperator":
        mats = tuple(symmetric(a) for a in matrices)
        if not mats or len({m.shape for m in mats}) != 1:
            raise ValueError("need a nonempty family of equally sized matrices")
        if not theta > 0:
            raise ValueError("smoothing temperature must be positive")
        eig = np.concatenate([sym_eigenvalues(m) for m in mats])
        lam = float(eig.min()) if lam is None else float(lam)
        Lam = float(eig.max()) if Lam is None else float(Lam)
        _check_constants(lam, Lam)
        if eig.min() < lam - 1e-12 or eig.max() > Lam + 1e-12:
            raise ValueError("a Bellman coefficient matrix violates lam I <= A <= Lam I")
        op = cls(OperatorKind.SMOOTH_BELLMAN, lam, Lam, mats[0].shape[0], mats, float(theta))
        zero = np.zeros((op.dim, op.dim))
        return replace(op, offset=float(op._raw(zero)))

    def with_theta(self, theta: float) -> "EllipticOperator":
        if self.kind is not OperatorKind.SMOOTH_BELLMAN:
            return self
        fresh = EllipticOperator.smooth_bellman(self.matrices, theta, self.lam, self.Lam)
        return replace(fresh, scale=self.scale)

    @property
    def is_convex(self) -> bool:
        return self.kind is not OperatorKind.PUCCI_MINUS

    @property
    def is_smooth(self) -> bool:
        """(F3): LinearTrace and SmoothBellman are C^{1,1}; Pucci operators are not."""
        return self.kind in (OperatorKind.LINEAR_TRACE, OperatorKind.SMOOTH_BELLMAN)

    def _raw(self, m: np.ndarray) -> np.ndarray:
        """Unscaled, unshifted value."""
        if self.kind is OperatorKind.PUCCI_PLUS:
            return pucci_plus(m, self.lam, self.Lam)
        if self.kind is OperatorKind.PUCCI_MINUS:
            return pucci_minus(m, self.lam, self.Lam)
        traces = np.stack([np.einsum("ij,...ji->...", a, m) for a in self.matrices], axis=-1)
        if self.kind is OperatorKind.LINEAR_TRACE:
            return traces[..., 0]
        return log_sum_exp(traces / self.theta) * self.theta

    def __call__(self, m) -> np.ndarray:
        return evaluate_operator(self, m)

    def describe(self) -> dict:
        out = {"kind": self.kind.value, "lambda": self.lam, "Lambda": self.Lam, "dim": self.dim}
        if self.matrices:
            out["matrices"] = [a.tolist() for a in self.matrices]
        if self.kind is OperatorKind.SMOOTH_BELLMAN:
            out["theta"] = self.theta
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


def log_sum_exp(z: np.ndarray) -> np.ndarray:
    """log sum exp over the last axis, shifted by the max for stability."""
    top = z.max(axis=-1)
    return top + np.log(np.exp(z - top[..., None]).sum(axis=-1))


def evaluate_operator(op: EllipticOperator, m) -> np.ndarray:
    m = np.asarray(m, float)
    if m.shape[-1] != op.dim:
        raise ValueError(f"operator acts on {op.dim}x{op.dim} matrices, got {m.shape[-2:]}")
    s = op.scale
    return (op._raw(s * m) - op.offset) / s


def scaled_operator(op: EllipticOperator, s: float) -> EllipticOperator:
    """M -> F(s M) / s, same ellipticity constants."""
    if not s > 0:
        raise ValueError("scale must be positive")
    return replace(op, scale=op.scale * s)


class DegeneracyMode(enum.Enum):
    REGULARIZED = "regularized"
    SINGULAR = "singular"


@dataclass(frozen=True)
class DegeneracyProfile:
    """g(p) = (eps^2 + |p|^2)^(gamma/2) (regularized) or |p|^gamma (singular)."""

    gamma: float
    epsilon: float = 0.0
    mode: DegeneracyMode = DegeneracyMode.REGULARIZED

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.mode is DegeneracyMode.REGULARIZED and self.gamma < 0 and self.epsilon == 0:
            raise ValueError("regularized profile with gamma < 0 needs epsilon > 0")

    def regularized(self, epsilon: float) -> "DegeneracyProfile":
        return DegeneracyProfile(self.gamma, epsilon, DegeneracyMode.REGULARIZED)

    def bound(self, grad_bound: float) -> float:
        """max of g over |p| <= grad_bound."""
        if self.gamma >= 0:
            return float(degeneracy_of_norm(self, np.asarray(grad_bound)))
        if self.mode is DegeneracyMode.SINGULAR:
            return float("inf")
        return float(self.epsilon**self.gamma)


def degeneracy_of_norm(profile: DegeneracyProfile, pnorm) -> np.ndarray:
    """g as a function of |p|."""
    pnorm = np.asarray(pnorm, float)
    g = profile.gamma
    if g == 0:
        return np.ones_like(pnorm)
    if profile.mode is DegeneracyMode.REGULARIZED:
        return (profile.epsilon**2 + pnorm**2) ** (0.5 * g)
    if g < 0 and np.any(pnorm == 0):
        raise SingularEvaluationError("|p|^gamma with gamma < 0 at p = 0; solve the regularized cascade instead")
    return pnorm**g


def degeneracy(profile: DegeneracyProfile, p) -> np.ndarray:
    p = np.asarray(p, float)
    return degeneracy_of_norm(profile, np.sqrt((p * p).sum(-1)))


def degeneracy_slope(profile: DegeneracyProfile, pnorm) -> np.ndarray:
    """|dg/d|p||, used by the step controller."""
    pnorm = np.asarray(pnorm, float)
    g = profile.gamma
    if g == 0:
        return np.zeros_like(pnorm)
    e2 = profile.epsilon**2 if profile.mode is DegeneracyMode.REGULARIZED else 0.0
    base = e2 + pnorm**2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(g) * pnorm * base ** (0.5 * g - 1)
    if e2 > 0 or g > 1:
        at_zero = 0.0
    else:
        at_zero = 1.0 if g == 1 else np.inf
    return np.where(pnorm > 0, out, at_zero)


def rhs(op: EllipticOperator, profile: DegeneracyProfile, p, m, f_value=0.0) -> np.ndarray:
    """g(p) F(M) + f."""
    return degeneracy(profile, p) * evaluate_operator(op, m) + f_value
