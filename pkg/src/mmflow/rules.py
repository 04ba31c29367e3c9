"""Plasticity rules: the drive ``G(W, x, t)`` of ``dW/dt = -gamma W + G``.

Every rule uses the firing-rate nonlinearity ``phi = tanh`` componentwise,
so ``phi`` is bounded by one and its slope by ``g = 1``. ``evaluate_G``
never sees the leak rate; the leak lives in :mod:`mmflow.dynamics`.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    ValidationError,
    check_positive_int,
    check_scalar,
    check_square_matrix,
    check_vector,
)
from .measures import MeasureId, frobenius_norm

__all__ = [
    "phi",
    "AntiHebbian",
    "HadamardHebbian",
    "DongHopfield",
    "Covariance",
    "Presynaptic",
    "GradientFlow",
    "RULE_TYPES",
    "RuleState",
    "evaluate_G",
    "bound_D",
    "running_average",
    "make_psd",
    "load_matrix",
]

PHI_MAX = 1.0
PSD_TOL = 1e-10


def phi(x):
    return np.tanh(x)


@dataclass(frozen=True)
class AntiHebbian:
    name = "anti_hebbian"

    def check(self, n):
        pass


@dataclass(frozen=True, eq=False)
class HadamardHebbian:
    """``G = -K * phi phi^T`` (elementwise) for a symmetric PSD ``K``."""

    K: np.ndarray
    name = "hadamard_hebbian"

    def __post_init__(self):
        K = check_square_matrix(self.K, "K")
        if not np.array_equal(K, K.T):
            raise ValidationError("K must be symmetric")
        lam_min = np.linalg.eigvalsh(K)[0]
        if lam_min < -PSD_TOL * frobenius_norm(K):
            raise ValidationError(f"K must be positive semi-definite (min eigenvalue {lam_min:.3g})")
        object.__setattr__(self, "K", K)

    def check(self, n):
        if self.K.shape[0] != n:
            raise ValidationError(f"K is {self.K.shape[0]}x{self.K.shape[0]}, network has n={n}")

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.K, other.K)


@dataclass(frozen=True)
class DongHopfield:
    nu: float
    name = "dong_hopfield"

    def __post_init__(self):
        object.__setattr__(self, "nu", check_scalar(self.nu, "nu", low=0.0))

    def check(self, n):
        pass


@dataclass(frozen=True)
class Covariance:
    """Covariance rule around a running average of the firing rate.

    ``normalize_window=False`` returns the literal windowed integral instead
    of the average (no ``1/window`` factor).
    """

    nu: float
    delta: float
    sigma_sq: float
    normalize_window: bool = True
    name = "covariance"

    def __post_init__(self):
        object.__setattr__(self, "nu", check_scalar(self.nu, "nu", low=0.0))
        object.__setattr__(self, "delta", check_scalar(self.delta, "delta", low=0.0, strict_low=True))
        object.__setattr__(self, "sigma_sq", check_scalar(self.sigma_sq, "sigma_sq", low=0.0))
        object.__setattr__(self, "normalize_window", bool(self.normalize_window))

    def check(self, n):
        pass


@dataclass(frozen=True, eq=False)
class Presynaptic:
    """``G_ij = b_i phi(x_j)``; ``b_max`` is derived from ``b``."""

    b: np.ndarray
    phi_max: float = PHI_MAX
    name = "presynaptic"

    def __post_init__(self):
        object.__setattr__(self, "b", check_vector(self.b, name="b"))
        object.__setattr__(
            self, "phi_max", check_scalar(self.phi_max, "phi_max", low=0.0, strict_low=True)
        )

    @property
    def b_max(self):
        return float(np.max(np.abs(self.b)))

    def check(self, n):
        if self.b.shape[0] != n:
            raise ValidationError(f"b has length {self.b.shape[0]}, network has n={n}")

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and np.array_equal(self.b, other.b)
            and self.phi_max == other.phi_max
        )


@dataclass(frozen=True, eq=False)
class GradientFlow:
    """Gradient flow on the synthetic task loss ``0.5 ||W - target||_F^2``.

    The gradient is clipped radially so that its Frobenius, 1- and inf-norms
    are all at most ``lipschitz_L``.
    """

    target: np.ndarray
    lipschitz_L: float
    name = "gradient_flow"

    def __post_init__(self):
        object.__setattr__(self, "target", check_square_matrix(self.target, "target"))
        object.__setattr__(
            self,
            "lipschitz_L",
            check_scalar(self.lipschitz_L, "lipschitz_L", low=0.0, strict_low=True),
        )

    def check(self, n):
        if self.target.shape[0] != n:
            raise ValidationError(f"target is {self.target.shape[0]}x{self.target.shape[0]}, network has n={n}")

    def gradient(self, W):
        grad = W - self.target
        radius = max(
            np.sqrt(np.sum(grad * grad)),
            np.abs(grad).sum(axis=0).max(),
            np.abs(grad).sum(axis=1).max(),
        )
        if radius > self.lipschitz_L:
            grad = grad * (self.lipschitz_L / radius)
        return grad

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and np.array_equal(self.target, other.target)
            and self.lipschitz_L == other.lipschitz_L
        )


RULE_TYPES = {
    cls.name: cls
    for cls in (AntiHebbian, HadamardHebbian, DongHopfield, Covariance, Presynaptic, GradientFlow)
}


@dataclass
class RuleState:
    """Firing-rate history for the covariance rule's running average.

    Samples older than the averaging window are dropped, except the newest
    one at or before the window start, which is kept for interpolation.
    """

    window: float = np.inf
    times: deque = field(default_factory=deque)
    values: deque = field(default_factory=deque)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def append(self, t, phi_x):
        t = float(t)
        if self.times and not t > self.times[-1]:
            raise ValidationError(f"history times must increase strictly ({t} after {self.times[-1]})")
        self.times.append(t)
        self.values.append(np.array(phi_x, dtype=np.float64))
        self._cache.clear()
        cutoff = t - self.window
        while len(self.times) >= 2 and self.times[1] <= cutoff:
            self.times.popleft()
            self.values.popleft()

    @property
    def last_time(self):
        return self.times[-1] if self.times else None

    def __len__(self):
        return len(self.times)

    def copy(self):
        return RuleState(self.window, deque(self.times), deque(v.copy() for v in self.values))


def running_average(state, t, delta, normalize=True):
    """Trapezoidal estimate of the windowed firing-rate integral over ``[t - delta, t]``.

    The window is clipped to the recorded history, so before ``t = delta``
    the average runs over ``[t0, t]``. With ``normalize=True`` the integral
    is divided by the covered length; a single sample is returned as-is.
    """
    if len(state) == 0:
        raise ValidationError("running average requested from an empty history")
    t = min(float(t), state.times[-1])
    key = (t, float(delta), bool(normalize))
    cached = state._cache.get(key)
    if cached is None:
        cached = state._cache[key] = _window_average(state, t, delta, normalize)
    return cached.copy()


def _window_average(state, t, delta, normalize):
    times = np.fromiter(state.times, dtype=np.float64)
    values = np.array(state.values)
    t = min(float(t), times[-1])
    start = max(t - delta, times[0])
    keep = (times > start) & (times < t)
    ts = np.concatenate(([start], times[keep], [t]))
    vs = np.vstack([_interp(times, values, start), values[keep], _interp(times, values, t)])
    length = t - start
    if length <= 0.0:
        return vs[-1].copy() if normalize else np.zeros(values.shape[1])
    integral = 0.5 * ((ts[1:] - ts[:-1])[:, None] * (vs[1:] + vs[:-1])).sum(axis=0)
    return integral / length if normalize else integral


def _interp(times, values, t):
    i = np.searchsorted(times, t, side="right") - 1
    if i < 0:
        return values[0]
    if i >= len(times) - 1 or times[i] == t:
        return values[i]
    w = (t - times[i]) / (times[i + 1] - times[i])
    return (1.0 - w) * values[i] + w * values[i + 1]


def evaluate_G(rule, W, x, t, state=None):
    """Evaluate the plasticity drive ``G(W, x, t)``, leak excluded."""
    W = check_square_matrix(W)
    n = W.shape[0]
    x = check_vector(x, n)
    rule.check(n)
    r = phi(x)
    if isinstance(rule, AntiHebbian):
        return -np.outer(r, r)
    if isinstance(rule, HadamardHebbian):
        return -rule.K * np.outer(r, r)
    if isinstance(rule, DongHopfield):
        return rule.nu * np.outer(r, r)
    if isinstance(rule, Covariance):
        if state is None or len(state) == 0:
            raise ValidationError("covariance rule needs a populated RuleState")
        dev = r - running_average(state, t, rule.delta, rule.normalize_window)
        return rule.nu * np.outer(dev, dev)
    if isinstance(rule, Presynaptic):
        return np.outer(rule.b, r)
    if isinstance(rule, GradientFlow):
        return -rule.gradient(W)
    raise ValidationError(f"unsupported rule {rule!r}")


def bound_D(rule, n):
    """Analytic bound ``D >= mu[G]`` and the measure it holds under.

    Returns
    -------
    (float, MeasureId)
    """
    n = check_positive_int(n, "n")
    if isinstance(rule, (AntiHebbian, HadamardHebbian)):
        return 0.0, MeasureId.MU2
    if isinstance(rule, DongHopfield):
        return rule.nu * n * PHI_MAX**2, MeasureId.MU2
    if isinstance(rule, Covariance):
        return rule.nu * rule.sigma_sq, MeasureId.MU2
    if isinstance(rule, Presynaptic):
        return n * rule.b_max * rule.phi_max, MeasureId.MU1
    if isinstance(rule, GradientFlow):
        return rule.lipschitz_L, MeasureId.MU2
    raise ValidationError(f"unsupported rule {rule!r}")


def make_psd(seed, n, scale=1.0):
    """Seeded Gram matrix ``scale * A A^T / n`` with i.i.d. normal ``A``."""
    n = check_positive_int(n, "n")
    scale = check_scalar(scale, "scale", low=0.0, strict_low=True)
    A = np.random.default_rng(seed).standard_normal((n, n))
    K = scale * (A @ A.T) / n
    return 0.5 * (K + K.T)


def load_matrix(path):
    """Read a dense matrix from a whitespace-separated text file."""
    M = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return check_square_matrix(M, str(path))
