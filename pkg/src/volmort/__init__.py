"""volmort: cointegrated long-range-dependent mortality modeling, longevity
bond pricing, and time-consistent mean-variance hedging."""

__version__ = "0.1.0"

from ._accel import backend
from .affine import (Baseline, MarketPrices, MortalityParams, RateParams,
                     affine_rate_ode, conditional_mean_mu, deterministic_mean,
                     functional_Y, laplace_at_zero, under_hedging_measure,
                     under_pricing_measure)
from .estimation import (EstimationResult, estimate_cointegrated,
                         estimate_correlated, estimate_markovian,
                         holder_regularity)
from .experiments import (ScenarioConfig, run_frontier, run_sensitivity,
                          run_showcase)
from .hedging import (HedgeConfig, ModelTables, StrategySeries, build_tables,
                      equilibrium_strategy, gamma_solution, lambda_residual,
                      no_hedge_strategy, verify_equilibrium)
from .kernels import (CointegrationDrift, KernelMatrix, KernelSpec, TimeGrid,
                      convolve_fn, convolve_kernel, e_theta,
                      kernel_cell_weights, mittag_leffler, resolvent,
                      resolvent_identity_residual, resolvent_integral)
from .pricing import (BondQuote, InstrumentPanel, instrument_panel,
                      longevity_bond, term_structure, zero_coupon_bond)
from .riccati import (RiccatiBlowupError, RiccatiProblem, RiccatiSolution,
                      psi_linear, solve_riccati)
from .simulate import (LiabilityParams, PathBundle, evolve_wealth,
                       innovations_from_path, resimulate_from, simulate_claims,
                       simulate_mu_batch, simulate_paths, simulate_rate_batch)
