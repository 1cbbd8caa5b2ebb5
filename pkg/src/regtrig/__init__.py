"""Event-triggered certainty-equivalence adaptive control for polynomial plants."""

from .estimator import GramSystem, compute_mu, gram_pair, ls_update
from .executive import (ConfigError, SimulationResult, fit_decay, run_closed_loop,
                        scenario_from_config, trigger_threshold, verify_invariants)
from .integrator import SolverSettings, TrajectoryLog, integrate_segment
from .models import (Model, ModelError, TriggerParams, build_model, estimate_exp_bound,
                     example_4_2, example_4_3, linear)
from .observability import check_observability, kalman_observability, zero_set_certify
from .polyalg import (Polynomial, PolynomialSyntaxError, PolyVectorField, lie_chain,
                      lie_derivative, poly_eval, repeated_lie)
from .polybridge import PolyModel

__version__ = "0.1.0"
