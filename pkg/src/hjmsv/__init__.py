"""Finite difference pricing in a Markovian HJM model with stochastic volatility."""

from .curve import InitialCurve, load_curve
from .discretization import Grid3
from .instruments import MeshConfig, PriceResult, extract_greeks, interpolate_at, premium_ladder, price_caplet, price_zcb
from .mc import McConfig, McEstimate, simulate_caplet, simulate_zcb
from .model import CapletSpec, ModelParams, StatePoint, zcb_closed_form
from .solver import SolveReport, SolverConfig

__version__ = "0.1.0"
