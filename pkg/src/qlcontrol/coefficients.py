"""Problem coefficients with declared constants and sampled hypothesis checks.

A :class:`CoefficientSet` bundles the functions a problem uses (flux A,
gradient nonlinearity a, control-to-source map f, inner energy W, cost
integrand F, affine coupling w) together with the structural constants the
theory needs (Lipschitz constant L of a, monotonicity/growth constants c < C,
Tychonov weight M, zero-order coefficient b, ellipticity floor a0).

The structural hypotheses are analytic statements; here they are checked by
seeded random sampling, which falsifies a wrong declaration but proves
nothing.  All function evaluations are vectorized over numpy arrays:
``A: (m,N)->(m,N)``, ``a: (m,N)->(m,)``, ``f,F,w: elementwise``,
``W: (m,N),(m,)->(m,)``, ``dW: (m,N),(m,)->(m,N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "CoefficientSet",
    "HypothesisReport",
    "make_perturbed_linear",
    "identity_flux",
    "check_monotonicity",
    "check_growth",
    "check_w_growth",
    "check_w_convexity",
    "a_zero",
    "a_sin_gradient",
    "a_clamped_linear",
    "a_cosine_wells",
    "f_linear",
    "f_tanh",
    "f_clamp",
    "w_quadratic",
    "w_quadratic_bump",
    "w_quartic_clamped",
    "w_u_scaled_quadratic",
    "cost_tracking",
    "cost_shortfall",
]

DEFAULT_SAMPLES = 10_000
DEFAULT_RADIUS = 10.0
CHECK_TOLERANCE = 1e-10
_EPS_STRICT = 1e-12  # clamp so that 0 < c < C stays strict for linear fluxes


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of one sampled hypothesis check.

    ``worst_margin`` is the most negative slack seen across samples (slack
    >= 0 means the hypothesis held at that sample); the check passes when the
    worst violation stays within tolerance.
    """

    hypothesis: str
    samples: int
    worst_margin: float
    tolerance: float = CHECK_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tolerance


@dataclass(frozen=True)
class CoefficientSet:
    """The problem's functions plus their declared constants.

    Every function is optional; a problem declares which it uses.  Constants:
    L (Lipschitz constant of a), 0 < c < C (monotonicity / growth), M > 0
    (Tychonov weight), b >= 0 (zero-order coefficient), a0 > 0 (ellipticity
    floor of the perturbed-linear family).
    """

    A: Optional[Callable] = None
    a: Optional[Callable] = None
    f: Optional[Callable] = None
    W: Optional[Callable] = None
    dW: Optional[Callable] = None
    F: Optional[Callable] = None
    w: Optional[Callable] = None
    dw: Optional[Callable] = None
    L: float = 0.0
    c: Optional[float] = None
    C: Optional[float] = None
    M: Optional[float] = None
    b: Optional[float] = None
    a0: Optional[float] = None
    f_bound: Optional[float] = None
    w_grad_identity: bool = False  # True iff dW(y,u) == y exactly
    names: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.c is not None and self.C is not None:
            if not (0.0 < self.c < self.C):
                raise ValueError(
                    f"constants must satisfy 0 < c < C, got c={self.c}, C={self.C}"
                )
        if self.M is not None and not self.M > 0.0:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.L < 0.0:
            raise ValueError(f"L must be nonnegative, got {self.L}")
        if self.a is not None:
            z = np.zeros((1, 2))
            a0val = float(np.asarray(self.a(z))[0])
            if abs(a0val) > 1e-14:
                raise ValueError(f"a(0) must vanish, got {a0val}")

    def merged(self, **updates) -> "CoefficientSet":
        """Copy with fields replaced (names dictionaries are merged)."""
        names = dict(self.names)
        names.update(updates.pop("names", {}))
        return replace(self, names=names, **updates)


# -- constructors for the built-in families -----------------------------------


def identity_flux() -> CoefficientSet:
    """A = identity; c = 1 and C clamped to c*(1+eps) to keep 0 < c < C."""
    return CoefficientSet(
        A=lambda Y: Y,
        c=1.0,
        C=1.0 * (1.0 + _EPS_STRICT),
        a0=1.0,
        names={"A": "identity"},
    )


def make_perturbed_linear(
    a_coeff: float,
    g: Optional[Callable] = None,
    lipschitz_g: float = 0.0,
) -> CoefficientSet:
    """Flux A(y) = a0*y + g(y) for globally Lipschitz g with g(0) = 0.

    Strict monotonicity constant c = a0 - L_g and growth constant C = a0 + L_g
    are recorded; the construction is rejected when a0 - L_g <= 0 because the
    strict monotonicity is lost.
    """
    if not a_coeff > 0.0:
        raise ValueError(f"a0 must be positive, got {a_coeff}")
    if lipschitz_g < 0.0:
        raise ValueError(f"L_g must be nonnegative, got {lipschitz_g}")
    if not a_coeff - lipschitz_g > 0.0:
        raise ValueError(
            "strict monotonicity lost: need a0 - L_g > 0, got "
            f"a0={a_coeff}, L_g={lipschitz_g}"
        )
    if g is not None:
        z = np.zeros((1, 2))
        gz = np.asarray(g(z))
        if np.max(np.abs(gz)) > 1e-14:
            raise ValueError("g(0) must vanish")
    c = a_coeff - lipschitz_g
    C = a_coeff + lipschitz_g
    if not c < C:
        C = c * (1.0 + _EPS_STRICT)

    if g is None:
        A = lambda Y: a_coeff * Y
    else:
        A = lambda Y: a_coeff * Y + g(Y)
    return CoefficientSet(
        A=A,
        c=c,
        C=C,
        a0=a_coeff,
        names={"A": f"perturbed-linear(a0={a_coeff}, L_g={lipschitz_g})"},
    )


def sin_perturbation(amplitude: float) -> Callable:
    """g(y) = amplitude * sin applied per component; Lipschitz with L_g = amplitude."""
    return lambda Y: amplitude * np.sin(Y)


def a_zero() -> dict:
    return {"a": lambda Y: np.zeros(Y.shape[0]), "L": 0.0, "names": {"a": "zero"}}


def a_sin_gradient(kappa: float = 1.0, axis: int = 0) -> dict:
    """a(y) = kappa * sin(e . y) for the unit vector e of the given axis."""
    return {
        "a": lambda Y: kappa * np.sin(Y[:, axis]),
        "L": abs(kappa),
        "names": {"a": f"sin-gradient(kappa={kappa})"},
    }


def a_clamped_linear(kappa: float = 1.0, axis: int = 0) -> dict:
    """a(y) = kappa * clamp(e . y, -1, 1)."""
    return {
        "a": lambda Y: kappa * np.clip(Y[:, axis], -1.0, 1.0),
        "L": abs(kappa),
        "names": {"a": f"clamped-linear(kappa={kappa})"},
    }


def a_cosine_wells(kappa: float, omega: float, axis: int = 0) -> dict:
    """a(y) = kappa * (1 - cos(omega * e . y)): nonnegative with equally deep
    wells at multiples of 2*pi/omega; globally Lipschitz with L = kappa*omega,
    and |a(y)| <= L |y| since 1 - cos(s) <= |s|."""
    return {
        "a": lambda Y: kappa * (1.0 - np.cos(omega * Y[:, axis])),
        "L": abs(kappa * omega),
        "names": {"a": f"cosine-wells(kappa={kappa}, omega={omega})"},
    }


def f_linear() -> dict:
    return {"f": lambda u: np.asarray(u, dtype=float), "names": {"f": "linear"}}


def f_zero() -> dict:
    return {
        "f": lambda u: np.zeros_like(np.asarray(u, dtype=float)),
        "f_bound": 0.0,
        "names": {"f": "zero"},
    }


def f_tanh() -> dict:
    return {"f": np.tanh, "f_bound": 1.0, "names": {"f": "tanh"}}


def f_clamp() -> dict:
    return {
        "f": lambda u: np.clip(u, -1.0, 1.0),
        "f_bound": 1.0,
        "names": {"f": "clamp"},
    }


def w_quadratic() -> dict:
    """W(y, u) = |y|^2 / 2 with constants c = 0.4, C = 0.6."""
    return {
        "W": lambda Y, u: 0.5 * np.sum(Y * Y, axis=1),
        "dW": lambda Y, u: Y,
        "w_grad_identity": True,
        "c": 0.4,
        "C": 0.6,
        "names": {"W": "quadratic"},
    }


def w_quadratic_bump(delta: float = 0.2) -> dict:
    """W(y, u) = |y|^2/2 + delta*(1 - cos u): smooth and nonconvex in u,
    strictly convex in y; the u-term never moves the state."""
    return {
        "W": lambda Y, u: 0.5 * np.sum(Y * Y, axis=1) + delta * (1.0 - np.cos(u)),
        "dW": lambda Y, u: Y,
        "w_grad_identity": True,
        "c": 0.4,
        "C": 0.5 + 2.0 * abs(delta),
        "names": {"W": f"quadratic-bump(delta={delta})"},
    }


def w_u_scaled_quadratic(eps: float = 0.25) -> dict:
    """W(y, u) = (1 + eps*tanh u) |y|^2 / 2: genuine (y,u) coupling so the
    state responds to the control through the inner energy."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")

    def W(Y, u):
        return 0.5 * (1.0 + eps * np.tanh(u)) * np.sum(Y * Y, axis=1)

    def dW(Y, u):
        return (1.0 + eps * np.tanh(u))[:, None] * Y

    return {
        "W": W,
        "dW": dW,
        "c": 0.5 * (1.0 - eps) * 0.9,
        "C": 0.5 * (1.0 + eps) + 0.1,
        "names": {"W": f"u-scaled-quadratic(eps={eps})"},
    }


def w_quartic_clamped(radius: float = 10.0) -> dict:
    """W(y) = |y|^2/2 + q(|y|) with q quartic inside the radius and extended
    by its tangent line outside, keeping the quadratic growth bound while
    staying strictly convex and C^1."""
    R = float(radius)

    def _q(t):
        return np.where(t <= R, 0.25 * t**4, 0.25 * R**4 + R**3 * (t - R))

    def W(Y, u):
        t = np.sqrt(np.sum(Y * Y, axis=1))
        return 0.5 * t * t + _q(t)

    def dW(Y, u):
        t = np.sqrt(np.sum(Y * Y, axis=1))
        # q'(t)/t : t^2 inside the radius, R^3/t outside (0 at the origin)
        scale = np.where(t <= R, t * t, R**3 / np.maximum(t, R))
        return Y * (1.0 + scale)[:, None]

    # global constants: C from the discriminant condition of the tangent
    # extension (R=10 gives C=34); c=0.4 is safe since W >= |y|^2/2
    C = 0.5 + 0.25 * R * R
    disc_C = C
    while R**6 > 4.0 * (disc_C - 0.5) * (disc_C + 0.75 * R**4):
        disc_C *= 1.1
    return {
        "W": W,
        "dW": dW,
        "c": 0.4,
        "C": float(disc_C),
        "names": {"W": f"quartic-clamped(R={radius})"},
    }


def w_coupling(name: str) -> dict:
    """Affine-coupling weight w(y) for the w(y)*u inner-energy form."""
    table = {
        "zero": (
            lambda y: np.zeros_like(np.asarray(y, dtype=float)),
            lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        ),
        "identity": (
            lambda y: np.asarray(y, dtype=float),
            lambda y: np.ones_like(np.asarray(y, dtype=float)),
        ),
        "tanh": (np.tanh, lambda y: 1.0 / np.cosh(y) ** 2),
    }
    if name not in table:
        raise ValueError(f"unknown coupling {name!r}")
    w, dw = table[name]
    return {"w": w, "dw": dw, "names": {"w": name}}


def cost_tracking(target: float, cap: float = 1e6) -> dict:
    """F(y) = min((y - target)^2, cap): continuous, bounded, bounded below."""

    def F(y):
        return np.minimum((np.asarray(y, dtype=float) - target) ** 2, cap)

    return {"F": F, "names": {"F": f"tracking(cap={cap})"}}


def cost_tracking_field(target_values: np.ndarray, cap: float = 1e6) -> dict:
    """Tracking cost against a fixed nodal target field."""
    tv = np.asarray(target_values, dtype=float)

    def F(y):
        return np.minimum((np.asarray(y, dtype=float) - tv) ** 2, cap)

    return {"F": F, "names": {"F": f"tracking-field(cap={cap})"}}


def cost_zero() -> dict:
    """F = 0: the outer problem reduces to the Tychonov regularizer."""
    return {
        "F": lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        "names": {"F": "zero"},
    }


def cost_shortfall(cap: float = 1.0) -> dict:
    """F(y) = -min(y, cap): rewards large states up to the cap; bounded below
    by -cap."""

    def F(y):
        return -np.minimum(np.asarray(y, dtype=float), cap)

    return {"F": F, "names": {"F": f"shortfall(cap={cap})"}}


# -- sampled hypothesis checks --------------------------------------------------


def _ball_samples(rng, n: int, dim: int, radius: float) -> np.ndarray:
    """Uniform samples in the dim-ball of the given radius."""
    d = rng.standard_normal((n, dim))
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
    r = radius * rng.random(n) ** (1.0 / dim)
    return d * r[:, None]


def check_monotonicity(
    cs: CoefficientSet,
    samples: int = DEFAULT_SAMPLES,
    radius: float = DEFAULT_RADIUS,
    seed: int = 0,
    dim: int = 2,
) -> HypothesisReport:
    """Sampled check of (A(y1)-A(y2)).(y1-y2) >= c |y1-y2|^2."""
    if cs.A is None or cs.c is None:
        raise ValueError("check_monotonicity needs A and c")
    rng = np.random.default_rng(seed)
    Y1 = _ball_samples(rng, samples, dim, radius)
    Y2 = _ball_samples(rng, samples, dim, radius)
    d = Y1 - Y2
    slack = np.sum((cs.A(Y1) - cs.A(Y2)) * d, axis=1) - cs.c * np.sum(d * d, axis=1)
    return HypothesisReport("monotonicity", samples, float(np.min(slack)))


def check_growth(
    cs: CoefficientSet,
    samples: int = DEFAULT_SAMPLES,
    radius: float = DEFAULT_RADIUS,
    seed: int = 0,
    dim: int = 2,
) -> HypothesisReport:
    """Sampled check of |A(y)| <= C(|y|+1), A(y).y >= c(|y|^2-1) and, when a
    is present, |a(y)| <= C |y|."""
    if cs.C is None or cs.c is None:
        raise ValueError("check_growth needs c and C")
    rng = np.random.default_rng(seed)
    Y = _ball_samples(rng, samples, dim, radius)
    norms = np.linalg.norm(Y, axis=1)
    slacks = []
    if cs.A is not None:
        AY = cs.A(Y)
        slacks.append(cs.C * (norms + 1.0) - np.linalg.norm(AY, axis=1))
        slacks.append(np.sum(AY * Y, axis=1) - cs.c * (norms**2 - 1.0))
    if cs.a is not None:
        slacks.append(cs.C * norms - np.abs(cs.a(Y)))
    if not slacks:
        raise ValueError("check_growth needs A or a")
    return HypothesisReport("growth", samples, float(min(np.min(s) for s in slacks)))


def check_w_growth(
    cs: CoefficientSet,
    samples: int = DEFAULT_SAMPLES,
    radius: float = DEFAULT_RADIUS,
    seed: int = 0,
    dim: int = 2,
) -> HypothesisReport:
    """Sampled check of c(|y|^2 - 1) <= W(y, u) <= C(|y|^2 + 1)."""
    if cs.W is None or cs.c is None or cs.C is None:
        raise ValueError("check_w_growth needs W, c and C")
    rng = np.random.default_rng(seed)
    Y = _ball_samples(rng, samples, dim, radius)
    u = radius * (2.0 * rng.random(samples) - 1.0)
    Wv = cs.W(Y, u)
    n2 = np.sum(Y * Y, axis=1)
    lower = Wv - cs.c * (n2 - 1.0)
    upper = cs.C * (n2 + 1.0) - Wv
    return HypothesisReport(
        "w-growth", samples, float(min(np.min(lower), np.min(upper)))
    )


def check_w_convexity(
    cs: CoefficientSet,
    samples: int = 2000,
    radius: float = DEFAULT_RADIUS,
    seed: int = 0,
    dim: int = 2,
) -> HypothesisReport:
    """Midpoint-convexity spot check of W in its gradient argument."""
    if cs.W is None:
        raise ValueError("check_w_convexity needs W")
    rng = np.random.default_rng(seed)
    Y1 = _ball_samples(rng, samples, dim, radius)
    Y2 = _ball_samples(rng, samples, dim, radius)
    u = radius * (2.0 * rng.random(samples) - 1.0)
    mid = 0.5 * (Y1 + Y2)
    slack = 0.5 * (cs.W(Y1, u) + cs.W(Y2, u)) - cs.W(mid, u)
    return HypothesisReport("w-midpoint-convexity", samples, float(np.min(slack)))
