"""Coupled neural/synaptic dynamics.

    eps * dx/dt = -x + W tanh(x) + u(t)
          dW/dt = -gamma(t) W + G(W, x, t)

integrated with fixed-step classical RK4 on the stacked state ``(x, W)``.
"""

import csv
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._validation import (
    ValidationError,
    check_positive_int,
    check_scalar,
    check_square_matrix,
    check_vector,
)
from .measures import MeasureId, frobenius_norm, measure, skew_part
from .rules import Covariance, RuleState, evaluate_G, phi, running_average

__all__ = [
    "ZeroInput",
    "ConstantInput",
    "SinusoidInput",
    "PulseInput",
    "eval_input",
    "SimConfig",
    "Trajectory",
    "BlowUpError",
    "neural_derivative",
    "weight_derivative",
    "step_rk4",
    "simulate",
    "integrate_neural",
    "max_stable_dt",
    "BLOWUP_THRESHOLD",
    "CSV_COLUMNS",
]

BLOWUP_THRESHOLD = 1e12
CSV_COLUMNS = ("t", "mu_w", "mu_g", "skew_fro", "x_norm", "phi_dev_sq")


@dataclass(frozen=True)
class ZeroInput:
    kind = "zero"

    def __call__(self, t, n):
        return np.zeros(n)


@dataclass(frozen=True, eq=False)
class ConstantInput:
    c: np.ndarray
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "c", check_vector(self.c, name="input c"))

    def __call__(self, t, n):
        return self.c.copy()

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.c, other.c)


@dataclass(frozen=True, eq=False)
class SinusoidInput:
    """``u(t) = amplitude * sin(2 pi frequency t + phase)``."""

    amplitude: np.ndarray
    frequency: float
    phase: float = 0.0
    kind = "sinusoid"

    def __post_init__(self):
        object.__setattr__(self, "amplitude", check_vector(self.amplitude, name="input amplitude"))
        object.__setattr__(self, "frequency", check_scalar(self.frequency, "input frequency"))
        object.__setattr__(self, "phase", check_scalar(self.phase, "input phase"))

    def __call__(self, t, n):
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and np.array_equal(self.amplitude, other.amplitude)
            and (self.frequency, self.phase) == (other.frequency, other.phase)
        )


@dataclass(frozen=True, eq=False)
class PulseInput:
    """``c`` on ``[t_on, t_off)``, zero elsewhere."""

    c: np.ndarray
    t_on: float
    t_off: float
    kind = "pulse"

    def __post_init__(self):
        object.__setattr__(self, "c", check_vector(self.c, name="input c"))
        object.__setattr__(self, "t_on", check_scalar(self.t_on, "input t_on"))
        object.__setattr__(self, "t_off", check_scalar(self.t_off, "input t_off"))
        if self.t_off < self.t_on:
            raise ValidationError("pulse t_off must not precede t_on")

    def __call__(self, t, n):
        return self.c.copy() if self.t_on <= t < self.t_off else np.zeros_like(self.c)

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and np.array_equal(self.c, other.c)
            and (self.t_on, self.t_off) == (other.t_on, other.t_off)
        )


INPUT_TYPES = {cls.kind: cls for cls in (ZeroInput, ConstantInput, SinusoidInput, PulseInput)}


def eval_input(spec, t, n):
    u = np.asarray(spec(t, n), dtype=np.float64)
    if u.shape != (n,):
        raise ValidationError(f"input has shape {u.shape}, expected ({n},)")
    return u


def max_stable_dt(epsilon, gamma_max):
    return min(epsilon / 10.0, 0.01 / max(gamma_max, 1.0))


@dataclass(frozen=True, eq=False)
class SimConfig:
    """One simulation scenario.

    ``gamma`` may be modulated in time as
    ``gamma(t) = gamma * (1 + gamma_mod_amplitude * sin(gamma_mod_frequency * t))``
    with ``0 <= gamma_mod_amplitude < 1``. ``x0``/``W0`` left as ``None`` are
    drawn from ``seed`` (``W0`` first, i.i.d. normal scaled by ``1/sqrt(n)``,
    then ``x0`` standard normal).
    """

    n: int
    rule: object
    epsilon: float = 0.05
    gamma: float = 1.0
    measure_id: MeasureId = MeasureId.MU2
    input: object = field(default_factory=ZeroInput)
    x0: np.ndarray = None
    W0: np.ndarray = None
    dt: float = 0.005
    t_end: float = 10.0
    seed: int = 0
    k_threshold: float = 1.0
    record_stride: int = 1
    gamma_mod_amplitude: float = 0.0
    gamma_mod_frequency: float = 0.0

    def __post_init__(self):
        n = check_positive_int(self.n, "n")
        setattr_ = object.__setattr__
        setattr_(self, "epsilon", check_scalar(self.epsilon, "epsilon", low=0.0, strict_low=True))
        setattr_(self, "gamma", check_scalar(self.gamma, "gamma", low=0.0))
        setattr_(self, "measure_id", MeasureId.parse(self.measure_id))
        setattr_(self, "dt", check_scalar(self.dt, "dt", low=0.0, strict_low=True))
        setattr_(self, "t_end", check_scalar(self.t_end, "t_end", low=self.dt * (1 - 1e-12)))
        setattr_(
            self,
            "k_threshold",
            check_scalar(self.k_threshold, "k_threshold", low=0.0, strict_low=True),
        )
        setattr_(self, "record_stride", check_positive_int(self.record_stride, "record_stride"))
        setattr_(
            self,
            "gamma_mod_amplitude",
            check_scalar(self.gamma_mod_amplitude, "gamma_mod_amplitude", low=0.0, high=1.0, strict_high=True),
        )
        setattr_(self, "gamma_mod_frequency", check_scalar(self.gamma_mod_frequency, "gamma_mod_frequency"))
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ValidationError(f"seed must be an integer, got {self.seed!r}")
        if self.x0 is not None:
            setattr_(self, "x0", check_vector(self.x0, n, "x0"))
        if self.W0 is not None:
            W0 = check_square_matrix(self.W0, "W0")
            if W0.shape[0] != n:
                raise ValidationError(f"W0 is {W0.shape[0]}x{W0.shape[0]}, expected n={n}")
            setattr_(self, "W0", W0)
        self.rule.check(n)
        limit = max_stable_dt(self.epsilon, self.gamma_max)
        if self.dt > limit * (1 + 1e-9):
            raise ValidationError(
                f"dt={self.dt:g} violates the stiffness guard dt <= min(epsilon/10, 0.01/max(gamma,1)) = {limit:g}"
            )

    @property
    def gamma_max(self):
        return self.gamma * (1.0 + self.gamma_mod_amplitude)

    @property
    def gamma_is_constant(self):
        return self.gamma_mod_amplitude == 0.0 or self.gamma_mod_frequency == 0.0

    def gamma_at(self, t):
        if self.gamma_is_constant:
            return self.gamma
        return self.gamma * (1.0 + self.gamma_mod_amplitude * math.sin(self.gamma_mod_frequency * t))

    def gamma_integral(self, t):
        """``int_0^t gamma(s) ds`` in closed form."""
        if self.gamma_is_constant:
            return self.gamma * t
        w = self.gamma_mod_frequency
        return self.gamma * (t + self.gamma_mod_amplitude * (1.0 - math.cos(w * t)) / w)

    @property
    def n_steps(self):
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    def initial_state(self):
        rng = np.random.default_rng(self.seed)
        W0_draw = rng.standard_normal((self.n, self.n)) / math.sqrt(self.n)
        x0_draw = rng.standard_normal(self.n)
        W0 = self.W0 if self.W0 is not None else W0_draw
        x0 = self.x0 if self.x0 is not None else x0_draw
        return x0.copy(), W0.copy()

    def replace(self, **changes):
        return replace(self, **changes)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True


class BlowUpError(RuntimeError):
    def __init__(self, t, message="state diverged"):
        super().__init__(f"{message} at t={t:.17g}")
        self.t = t


@dataclass
class Trajectory:
    """Recorded samples of one run.

    ``x_samples``/``W_samples`` are ``None`` for trajectories read back from
    CSV, which carries the scalar channels only. ``status`` is ``"ok"`` or
    ``"blow_up"``; on blow-up the samples stop at the last finite state.
    """

    times: np.ndarray
    mu_W: np.ndarray
    mu_G: np.ndarray
    skew_fro: np.ndarray
    x_norm: np.ndarray
    phi_dev_sq: np.ndarray
    x_samples: np.ndarray = None
    W_samples: np.ndarray = None
    status: str = "ok"
    blow_up_time: float = None

    def __len__(self):
        return len(self.times)

    def columns(self):
        return (self.times, self.mu_W, self.mu_G, self.skew_fro, self.x_norm, self.phi_dev_sq)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in zip(*self.columns()):
                fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_COLUMNS:
                raise ValidationError(f"unexpected trajectory header {header}")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.array(rows, dtype=np.float64).reshape(-1, len(CSV_COLUMNS))
        return cls(*(data[:, j].copy() for j in range(len(CSV_COLUMNS))))

    def write_snapshots(self, path):
        """Dense text sidecar: one row per sample, ``t x_1..x_n W_11..W_nn``."""
        if self.x_samples is None or self.W_samples is None:
            raise ValidationError("trajectory has no state snapshots")
        m = len(self.times)
        block = np.hstack([self.times[:, None], self.x_samples, self.W_samples.reshape(m, -1)])
        np.savetxt(path, block, fmt="%.17g")


def neural_derivative(x, W, t, cfg):
    u = eval_input(cfg.input, t, cfg.n)
    return (-x + W @ phi(x) + u) / cfg.epsilon


def weight_derivative(W, x, t, cfg, state=None):
    return -cfg.gamma_at(t) * W + evaluate_G(cfg.rule, W, x, t, state)


def _derivatives(x, W, t, cfg, state):
    return neural_derivative(x, W, t, cfg), weight_derivative(W, x, t, cfg, state)


def _diverged(x, W):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(W))):
        return True
    return max(np.abs(x).max(), np.abs(W).max()) > BLOWUP_THRESHOLD


def step_rk4(x, W, t, cfg, state=None):
    """One classical RK4 step of size ``cfg.dt`` on ``(x, W)``.

    The covariance history is appended once, at ``t + dt``, after the step
    is accepted; the running average is frozen at its step-start value for
    all four stages.

    Raises
    ------
    BlowUpError
        If the new state is non-finite.
    """
    h = cfg.dt
    k1x, k1W = _derivatives(x, W, t, cfg, state)
    k2x, k2W = _derivatives(x + 0.5 * h * k1x, W + 0.5 * h * k1W, t + 0.5 * h, cfg, state)
    k3x, k3W = _derivatives(x + 0.5 * h * k2x, W + 0.5 * h * k2W, t + 0.5 * h, cfg, state)
    k4x, k4W = _derivatives(x + h * k3x, W + h * k3W, t + h, cfg, state)
    x_new = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    W_new = W + (h / 6.0) * (k1W + 2.0 * k2W + 2.0 * k3W + k4W)
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(W_new))):
        raise BlowUpError(t + h, "non-finite state")
    if state is not None:
        state.append(t + h, phi(x_new))
    return x_new, W_new, state


def _new_state(cfg, x0):
    if not isinstance(cfg.rule, Covariance):
        return None
    state = RuleState(window=cfg.rule.delta)
    state.append(0.0, phi(x0))
    return state


def _channels(x, W, t, cfg, state):
    G = evaluate_G(cfg.rule, W, x, t, state)
    if isinstance(cfg.rule, Covariance):
        dev = phi(x) - running_average(state, t, cfg.rule.delta, cfg.rule.normalize_window)
        dev_sq = float(dev @ dev)
    else:
        dev_sq = 0.0
    return (
        measure(W, cfg.measure_id),
        measure(G, cfg.measure_id),
        frobenius_norm(skew_part(W)),
        float(np.linalg.norm(x)),
        dev_sq,
    )


def simulate(cfg, keep_states=True):
    """Integrate ``cfg`` from ``(x0, W0)`` to ``t_end``.

    Samples are recorded at every ``record_stride``-th step and at the final
    step. A state whose entries exceed ``BLOWUP_THRESHOLD`` in magnitude, or
    turn non-finite, ends the run with ``status="blow_up"``.
    """
    x, W = cfg.initial_state()
    state = _new_state(cfg, x)
    n_steps = cfg.n_steps
    times, chans, xs, Ws = [], [], [], []

    def record(t):
        times.append(t)
        chans.append(_channels(x, W, t, cfg, state))
        if keep_states:
            xs.append(x.copy())
            Ws.append(W.copy())

    record(0.0)
    status, t_blow = "ok", None
    for i in range(n_steps):
        t = i * cfg.dt
        try:
            x_new, W_new, state = step_rk4(x, W, t, cfg, state)
        except BlowUpError as exc:
            status, t_blow = "blow_up", exc.t
            break
        x, W = x_new, W_new
        t_next = (i + 1) * cfg.dt
        if _diverged(x, W):
            status, t_blow = "blow_up", t_next
            record(t_next)
            break
        if (i + 1) % cfg.record_stride == 0 or i + 1 == n_steps:
            record(t_next)

    ch = np.array(chans, dtype=np.float64).reshape(-1, 5)
    return Trajectory(
        times=np.array(times),
        mu_W=ch[:, 0],
        mu_G=ch[:, 1],
        skew_fro=ch[:, 2],
        x_norm=ch[:, 3],
        phi_dev_sq=ch[:, 4],
        x_samples=np.array(xs) if keep_states else None,
        W_samples=np.array(Ws) if keep_states else None,
        status=status,
        blow_up_time=t_blow,
    )


def integrate_neural(x0, W_path, times, cfg):
    """RK4 on the neural equation alone with ``W`` replayed from a recording.

    ``W_path[i]`` is the weight matrix at ``times[i]``; stage values between
    samples are linearly interpolated. Returns the ``x`` samples at ``times``.
    """
    x = check_vector(x0, cfg.n, "x0").copy()
    W_path = np.asarray(W_path, dtype=np.float64)
    out = np.empty((len(times), cfg.n))
    out[0] = x
    for i in range(len(times) - 1):
        t, h = times[i], times[i + 1] - times[i]
        W_a, W_b = W_path[i], W_path[i + 1]
        W_mid = 0.5 * (W_a + W_b)
        k1 = neural_derivative(x, W_a, t, cfg)
        k2 = neural_derivative(x + 0.5 * h * k1, W_mid, t + 0.5 * h, cfg)
        k3 = neural_derivative(x + 0.5 * h * k2, W_mid, t + 0.5 * h, cfg)
        k4 = neural_derivative(x + h * k3, W_b, t + h, cfg)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if _diverged(x, W_b):
            raise BlowUpError(t + h)
        out[i + 1] = x
    return out
