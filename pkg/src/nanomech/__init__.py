"""Simulation and analysis toolkit for microwave-cavity readout of a nanomechanical beam."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CONST, HBAR, K_B, LOSSLESS, TWO_PI, CavityParams, CouplingModel, DomainError, MechanicalMode,
    cavity_linewidth, coupling_from_geometry, spring_constant, total_quality_factor,
)
from .spectra import FitError, NumericalError, SpectrumSeries, fit_lorentzian, integrate_lorentzian, welch_psd  # noqa: E402
from .mechanics import StabilityError, simulate_langevin  # noqa: E402
from .config import ConfigError, Scenario, load_scenario, parse_scenario  # noqa: E402
