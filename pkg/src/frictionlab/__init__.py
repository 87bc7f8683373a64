"""Pricing, hedging and utility optimisation under superlinear frictions."""

__version__ = "0.1.0"

from .arbitrage import Na2Report, NotFound, detect_na2, na2_certificate_search
from .config import RunConfig, SolverConfig
from .errors import FrictionLabError
from .friction import FrictionSpec, eval_g, eval_g_prime, eval_g_star
from .market import (GBMParams, PathEnsemble, ScenarioTree, TimeGrid, append_liquidation_period,
                     build_binomial_tree, deterministic_tree, random_tree)
from .superhedge import (Claim, MartingaleCertificate, SolveReport, dual_value, maximize_dual,
                         superhedge_price, verify_weak_duality)
from .utility import UtilitySpec, duality_gap_bound, maximize_utility, verify_foc
from .wealth import TradingRatePlan, market_bound, roll_forward, terminal_position

__all__ = [
    "Claim", "FrictionLabError", "FrictionSpec", "GBMParams", "MartingaleCertificate", "Na2Report",
    "NotFound", "PathEnsemble", "RunConfig", "ScenarioTree", "SolveReport", "SolverConfig",
    "TimeGrid", "TradingRatePlan", "UtilitySpec", "append_liquidation_period",
    "build_binomial_tree", "detect_na2", "deterministic_tree", "dual_value", "duality_gap_bound",
    "eval_g", "eval_g_prime", "eval_g_star", "market_bound", "maximize_dual", "maximize_utility",
    "na2_certificate_search", "random_tree", "roll_forward", "superhedge_price",
    "terminal_position", "verify_foc", "verify_weak_duality",
]
