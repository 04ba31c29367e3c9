import math
import os

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(ROOT, "scenarios")
POSITIVE_SCENARIOS = [
    "anti_hebbian",
    "hadamard_hebbian",
    "dong_hopfield",
    "covariance",
    "presynaptic",
    "gradient_flow",
]
NEGATIVE_SCENARIOS = ["theorem1_violation", "hebbian_blowup"]


def scenario_path(name):
    if name in NEGATIVE_SCENARIOS:
        return os.path.join(SCENARIO_DIR, "negative", f"{name}.cfg")
    return os.path.join(SCENARIO_DIR, f"{name}.cfg")


def finite_h_measure(W, ord, h=1e-7):
    """(||I + hW|| - 1) / h, the defining limit at a small finite step."""
    n = W.shape[0]
    return (np.linalg.norm(np.eye(n) + h * W, ord=ord) - 1.0) / h


def charpoly_eigs(S):
    """Eigenvalues from the characteristic polynomial (Faddeev-LeVerrier + roots)."""
    n = S.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(S)
    for k in range(1, n + 1):
        M = S @ M + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(S @ M) / k)
    return np.sort(np.roots(coeffs).real)


def closed_form_lambda_max(S):
    """Largest eigenvalue of a symmetric 1x1, 2x2 or 3x3 matrix in closed form."""
    n = S.shape[0]
    if n == 1:
        return S[0, 0]
    if n == 2:
        a, b, d = S[0, 0], S[0, 1], S[1, 1]
        return 0.5 * (a + d) + math.sqrt(0.25 * (a - d) ** 2 + b * b)
    # trigonometric solution of the symmetric cubic
    q = np.trace(S) / 3.0
    p1 = S[0, 1] ** 2 + S[0, 2] ** 2 + S[1, 2] ** 2
    p2 = (S[0, 0] - q) ** 2 + (S[1, 1] - q) ** 2 + (S[2, 2] - q) ** 2 + 2 * p1
    p = math.sqrt(p2 / 6.0)
    if p == 0.0:
        return q
    B = (S - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    return q + 2 * p * math.cos(math.acos(r) / 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


# criterion number -> (passed, summary); filled by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(number, passed, summary):
    prev = ACCEPTANCE.get(number)
    if prev is not None:
        passed = passed and prev[0]
        summary = f"{prev[1]}; {summary}"
    ACCEPTANCE[number] = (passed, summary)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {summary}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, summary = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {summary}")
