"""Matrix measure flows for recurrent networks with plastic synapses."""

from .dynamics import (
    ConstantInput,
    PulseInput,
    SimConfig,
    SinusoidInput,
    Trajectory,
    ZeroInput,
    simulate,
)
from .estimators import DecayRateRegressor, MatrixMeasureTransformer
from .measures import MeasureId, measure, mu_1, mu_2, mu_inf, operator_norm
from .rules import (
    AntiHebbian,
    Covariance,
    DongHopfield,
    GradientFlow,
    HadamardHebbian,
    Presynaptic,
    bound_D,
    evaluate_G,
)
from .verify import VerificationReport, verify_run, verify_trajectory

__version__ = "0.1.0"
