"""Trajectory checks for the measure-flow inequality and its consequences.

Every check is a pure function of a :class:`~mmflow.dynamics.Trajectory` and
scalar parameters, so re-checking a stored trajectory reproduces the report.
Inequalities are tested with the slack

    rho = C * h * (1 + max_t(|mu_W| + |mu_G|)),   C = 10,

where ``h`` is the largest sample spacing; forward-difference estimates of
the Dini derivative carry an ``O(h)`` bias that the slack has to absorb.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import ValidationError
from .dynamics import Trajectory, integrate_neural, simulate
from .measures import MeasureId, mu_2
from .rules import AntiHebbian, Covariance, GradientFlow, HadamardHebbian, bound_D

__all__ = [
    "CheckResult",
    "VerificationReport",
    "slack",
    "dini_forward",
    "theorem1_residuals",
    "check_theorem1",
    "check_corollary_bound",
    "check_threshold_crossing",
    "fit_decay_rate",
    "check_symmetry",
    "check_sigma_assumption",
    "check_contraction_pair",
    "verify_trajectory",
    "verify_run",
    "apply_fault",
    "CHECK_NAMES",
    "FAULTS",
]

SLACK_C = 10.0
GRACE_STEPS = 10
DECAY_FLOOR = 1e-12
SYMMETRY_TOL = 1e-10
SKEW_REL_TOL = 1e-6
SKEW_NOISE_FLOOR = 1e-8
RATE_REL_TOL = 0.02
CONTRACTION_RATIO = 1e-6

CHECK_NAMES = ("theorem1", "corollary", "crossing", "symmetry", "sigma_audit")
FAULTS = ("mu_w_exp_growth",)
STATUSES = ("pass", "fail", "hypothesis_unmet", "assumption_violated")


@dataclass
class CheckResult:
    """Outcome of one check.

    ``worst_margin`` is the most violating signed slack (negative means a
    violation beyond ``tolerance_used``) and ``location`` its time. Checks
    whose hypothesis did not hold are reported with ``passed = None``.
    """

    name: str
    status: str
    worst_margin: float = 0.0
    location: float = 0.0
    tolerance_used: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        if self.status == "pass":
            return True
        if self.status == "fail":
            return False
        return None

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "status": self.status,
            "worst_margin": float(self.worst_margin),
            "location_t": float(self.location),
            "tolerance": float(self.tolerance_used),
            "details": {k: _jsonable(v) for k, v in sorted(self.details.items())},
        }


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass
class VerificationReport:
    checks: list
    config_digest: str
    status: str

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "status": self.status,
            "config_digest": self.config_digest,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _gamma_fn(gamma):
    if callable(gamma):
        return gamma
    g = float(gamma)
    return lambda t: g


def slack(traj, C=SLACK_C):
    """Inequality slack ``rho(h)`` for a trajectory."""
    if len(traj) < 2:
        return 0.0
    h = float(np.max(np.diff(traj.times)))
    scale = 1.0 + float(np.max(np.abs(traj.mu_W) + np.abs(traj.mu_G)))
    return C * h * scale


def dini_forward(values, times, index):
    """Forward-difference estimate of the upper right Dini derivative."""
    values = np.asarray(values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if values.shape != times.shape:
        raise ValidationError("values and times must have equal length")
    if not 0 <= index < len(times) - 1:
        raise ValidationError(f"index {index} out of range for {len(times)} samples")
    dt = times[index + 1] - times[index]
    if not dt > 0:
        raise ValidationError("times must increase strictly")
    return float((values[index + 1] - values[index]) / dt)


def theorem1_residuals(traj, gamma):
    """``D+ mu_W - (-gamma mu_W + mu_G)`` at every sample but the last."""
    g = _gamma_fn(gamma)
    if len(traj) < 2:
        raise ValidationError("need at least two samples")
    t = traj.times
    if np.any(np.diff(t) <= 0):
        raise ValidationError("times must increase strictly")
    dini = np.diff(traj.mu_W) / np.diff(t)
    gam = np.array([g(ti) for ti in t[:-1]])
    return dini - (-gam * traj.mu_W[:-1] + traj.mu_G[:-1])


def check_theorem1(traj, gamma, C=SLACK_C):
    """Check ``D+ mu[W] <= -gamma mu[W] + mu[G]`` along ``traj``.

    ``gamma`` is a constant or a callable ``gamma(t)``.
    """
    if traj.mu_W is None or traj.mu_G is None:
        raise ValidationError("trajectory lacks mu_W/mu_G channels")
    rho = slack(traj, C)
    res = theorem1_residuals(traj, gamma)
    margins = rho - res
    i = int(np.argmin(margins))
    return CheckResult(
        "theorem1",
        "pass" if margins[i] >= 0 else "fail",
        worst_margin=float(margins[i]),
        location=float(traj.times[i]),
        tolerance_used=rho,
        details={"worst_residual": float(res.max())},
    )


def check_corollary_bound(traj, gamma, D, C=SLACK_C):
    """Check ``mu[W(t)] <= mu[W(0)] exp(-gamma t) + D / gamma``."""
    gamma = float(gamma)
    if not gamma > 0:
        raise ValidationError("corollary envelope needs gamma > 0")
    rho = slack(traj, C)
    envelope = traj.mu_W[0] * np.exp(-gamma * traj.times) + D / gamma
    margins = envelope + rho - traj.mu_W
    i = int(np.argmin(margins))
    return CheckResult(
        "corollary",
        "pass" if margins[i] >= 0 else "fail",
        worst_margin=float(margins[i]),
        location=float(traj.times[i]),
        tolerance_used=rho,
        details={"D": float(D), "gamma": gamma},
    )


def crossing_deadline(mu0, gamma, D, k):
    """Time at which the envelope ``mu0 exp(-gamma t) + D/gamma`` reaches ``k``."""
    return math.log(mu0 / (k - D / gamma)) / gamma


def check_threshold_crossing(traj, gamma, D, k, C=SLACK_C, grace_steps=GRACE_STEPS):
    """Check that ``mu_W`` falls below ``k`` by the envelope deadline and stays there.

    Needs ``D / k < gamma``; otherwise the result is ``hypothesis_unmet``.
    The deadline is extended by ``grace_steps`` sample spacings.
    """
    gamma, D, k = float(gamma), float(D), float(k)
    if not k > 0:
        raise ValidationError("k must be positive")
    if not (gamma > 0 and D / k < gamma):
        return CheckResult("crossing", "hypothesis_unmet", details={"reason": "D/k >= gamma"})
    rho = slack(traj, C)
    t, mu = traj.times, traj.mu_W
    h = float(np.max(np.diff(t))) if len(t) > 1 else 0.0
    grace = grace_steps * h
    below = np.nonzero(mu <= k)[0]
    if mu[0] <= k:
        t_star = 0.0
    else:
        t_star = crossing_deadline(mu[0], gamma, D, k)
    if len(below) == 0:
        if t[-1] < t_star + grace:
            return CheckResult(
                "crossing",
                "hypothesis_unmet",
                details={"reason": "horizon ends before deadline", "t_star": t_star},
            )
        return CheckResult(
            "crossing",
            "fail",
            worst_margin=float(k - mu.min()),
            location=float(t[-1]),
            tolerance_used=grace,
            details={"t_star": t_star},
        )
    i = int(below[0])
    deadline_margin = t_star + grace - t[i]
    worst, where = deadline_margin, t[i]
    if i + 1 < len(mu):
        stay = k + rho - mu[i + 1 :]
        j = int(np.argmin(stay))
        if stay[j] < worst:
            worst, where = float(stay[j]), t[i + 1 + j]
    return CheckResult(
        "crossing",
        "pass" if worst >= 0 else "fail",
        worst_margin=float(worst),
        location=float(where),
        tolerance_used=grace,
        details={"t_star": t_star, "crossing_time": float(t[i])},
    )


def fit_decay_rate(values, times, window=None, floor=DECAY_FLOOR):
    """Exponential decay rate from a least-squares fit of ``log(values)``.

    Samples below ``floor`` are dropped. ``window`` is an optional
    ``(t_start, t_stop)`` pair restricting the fit.

    Returns
    -------
    float
        Negated slope of ``log(values)`` against time.
    """
    v = np.asarray(values, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    mask = v >= floor
    if window is not None:
        mask &= (t >= window[0]) & (t <= window[1])
    if mask.sum() < 3:
        raise ValidationError("fewer than 3 usable samples for decay fit")
    tt, yy = t[mask], np.log(v[mask])
    A = np.column_stack([tt, np.ones_like(tt)])
    slope = np.linalg.lstsq(A, yy, rcond=None)[0][0]
    return float(-slope)


def check_symmetry(traj, gamma_integral, gamma=None):
    """Skew-part checks for rules with a symmetric drive.

    With a symmetric start the skew part must stay below ``1e-10``. Otherwise
    it must follow ``skew(0) exp(-int gamma)`` to relative error ``1e-6`` and,
    for constant ``gamma``, its fitted decay rate must match within 2%.
    """
    s = traj.skew_fro
    t = traj.times
    if s[0] <= SYMMETRY_TOL:
        i = int(np.argmax(s))
        margin = SYMMETRY_TOL - s[i]
        return CheckResult(
            "symmetry",
            "pass" if margin >= 0 else "fail",
            worst_margin=float(margin),
            location=float(t[i]),
            tolerance_used=SYMMETRY_TOL,
            details={"mode": "symmetric_start"},
        )
    predicted = s[0] * np.exp(-np.array([gamma_integral(ti) for ti in t]))
    # below this the skew norm is dominated by rounding of W itself
    usable = predicted > SKEW_NOISE_FLOOR
    rel = np.abs(s[usable] - predicted[usable]) / predicted[usable]
    margins = SKEW_REL_TOL - rel
    i = int(np.argmin(margins))
    worst, where = float(margins[i]), float(t[usable][i])
    details = {"mode": "skew_decay", "max_rel_error": float(rel.max())}
    if gamma is not None and gamma > 0:
        rate = fit_decay_rate(s, t)
        details["fitted_rate"] = rate
        rate_margin = RATE_REL_TOL - abs(rate - gamma) / gamma
        details["rate_margin"] = rate_margin
        if rate_margin < worst:
            worst, where = rate_margin, float(t[-1])
    return CheckResult(
        "symmetry",
        "pass" if worst >= 0 else "fail",
        worst_margin=worst,
        location=where,
        tolerance_used=SKEW_REL_TOL,
        details=details,
    )


def check_sigma_assumption(traj, sigma_sq):
    """Audit ``sup_t ||phi - <phi>||^2 <= sigma_sq`` on the recorded run."""
    i = int(np.argmax(traj.phi_dev_sq))
    margin = float(sigma_sq - traj.phi_dev_sq[i])
    return CheckResult(
        "sigma_audit",
        "pass" if margin >= 0 else "assumption_violated",
        worst_margin=margin,
        location=float(traj.times[i]),
        tolerance_used=0.0,
        details={"sigma_sq": float(sigma_sq), "observed_sup": float(traj.phi_dev_sq[i])},
    )


def check_contraction_pair(
    cfg, x0_a, x0_b, W_path=None, times=None, g=1.0, margin=0.05, enforce_threshold=True
):
    """Check that two neural trajectories under one weight path converge.

    The weight path is recorded once (or supplied, either as a sequence of
    matrices at ``times`` or as one constant matrix) and replayed into both
    runs. The decay of ``||x_a - x_b||`` is fitted over the window after
    ``mu_2[W]`` first drops to ``(1 - margin) / g``. The check passes if the
    fitted rate is positive and the final distance is below ``1e-6`` of the
    distance at the window start.
    """
    if W_path is None:
        traj = simulate(cfg.replace(record_stride=1))
        if traj.status != "ok":
            return CheckResult("contraction_pair", "hypothesis_unmet", details={"reason": "blow_up"})
        W_path, times = traj.W_samples, traj.times
    else:
        W_path = np.asarray(W_path, dtype=np.float64)
        if W_path.ndim == 2:
            times = np.arange(cfg.n_steps + 1) * cfg.dt
            W_path = np.broadcast_to(W_path, (len(times),) + W_path.shape)
        elif times is None:
            raise ValidationError("times required with a recorded W path")
    times = np.asarray(times, dtype=np.float64)
    k_c = (1.0 - margin) / g
    mus = np.array([mu_2(W) for W in W_path])
    below = np.nonzero(mus <= k_c)[0]
    if len(below) == 0:
        if enforce_threshold:
            return CheckResult(
                "contraction_pair",
                "hypothesis_unmet",
                details={"reason": "mu_2[W] never below threshold", "threshold": k_c},
            )
        i0 = 0
    else:
        i0 = int(below[0])

    xa = integrate_neural(x0_a, W_path, times, cfg)
    xb = integrate_neural(x0_b, W_path, times, cfg)
    dist = np.linalg.norm(xa - xb, axis=1)
    window = (times[i0], times[-1])
    details = {"window_start": float(window[0]), "threshold": k_c}
    if not np.any(dist[i0:] > 0):
        details["reason"] = "identical trajectories"
        return CheckResult("contraction_pair", "pass", location=float(window[0]), details=details)
    try:
        rate = fit_decay_rate(dist, times, window)
    except ValidationError:
        rate = 0.0
    ratio = dist[-1] / dist[i0] if dist[i0] > 0 else np.inf
    details.update(rate=rate, distance_ratio=float(ratio))
    ratio_margin = math.log(CONTRACTION_RATIO) - math.log(max(ratio, 1e-300))
    worst = min(rate, ratio_margin)
    return CheckResult(
        "contraction_pair",
        "pass" if rate > 0 and ratio < CONTRACTION_RATIO else "fail",
        worst_margin=float(worst),
        location=float(times[-1]),
        tolerance_used=CONTRACTION_RATIO,
        details=details,
    )


def apply_fault(traj, fault):
    """Return a copy of ``traj`` with a manufactured defect injected."""
    if fault is None:
        return traj
    if fault == "mu_w_exp_growth":
        return replace(traj, mu_W=traj.mu_W * np.exp(traj.times))
    raise ValidationError(f"unknown fault {fault!r}")


def _rule_bound(cfg):
    """``D`` valid for the configured measure, or None when none is known."""
    D, id = bound_D(cfg.rule, cfg.n)
    if id is cfg.measure_id or isinstance(cfg.rule, GradientFlow):
        return D
    return None


def verify_trajectory(traj, cfg, checks=None, fault=None):
    """Run every applicable check on an existing trajectory."""
    from .config import config_digest

    wanted = set(CHECK_NAMES if checks is None else checks)
    unknown = wanted - set(CHECK_NAMES)
    if unknown:
        raise ValidationError(f"unknown checks {sorted(unknown)}")
    traj = apply_fault(traj, fault)
    results = []
    gamma_const = cfg.gamma if cfg.gamma_is_constant else None

    assumption_ok = True
    if isinstance(cfg.rule, Covariance) and "sigma_audit" in wanted:
        audit = check_sigma_assumption(traj, cfg.rule.sigma_sq)
        assumption_ok = audit.status == "pass"
        results.append(audit)

    if "theorem1" in wanted:
        results.append(check_theorem1(traj, cfg.gamma_at))

    D = _rule_bound(cfg)
    if "corollary" in wanted:
        if not (gamma_const is not None and gamma_const > 0):
            results.append(CheckResult("corollary", "hypothesis_unmet", details={"reason": "gamma not a positive constant"}))
        elif D is None:
            results.append(CheckResult("corollary", "hypothesis_unmet", details={"reason": "no bound for this measure"}))
        elif not assumption_ok:
            results.append(CheckResult("corollary", "assumption_violated"))
        else:
            results.append(check_corollary_bound(traj, gamma_const, D))

    if "crossing" in wanted:
        if gamma_const is None or D is None:
            results.append(CheckResult("crossing", "hypothesis_unmet", details={"reason": "no constant gamma or bound"}))
        elif not assumption_ok:
            results.append(CheckResult("crossing", "assumption_violated"))
        else:
            results.append(check_threshold_crossing(traj, gamma_const, D, cfg.k_threshold))

    if "symmetry" in wanted and isinstance(cfg.rule, (AntiHebbian, HadamardHebbian)):
        results.append(check_symmetry(traj, cfg.gamma_integral, gamma_const))

    if traj.status == "blow_up":
        status = "blow_up"
    elif any(c.status == "fail" for c in results):
        status = "fail"
    elif any(c.status == "assumption_violated" for c in results):
        status = "assumption_violated"
    else:
        status = "pass"
    return VerificationReport(results, config_digest(cfg), status)


def verify_run(cfg, checks=None, fault=None):
    """Simulate ``cfg`` and verify it.

    Returns
    -------
    (VerificationReport, Trajectory)
        The trajectory is the raw simulation, before any fault injection.
    """
    traj = simulate(cfg)
    return verify_trajectory(traj, cfg, checks, fault), traj
