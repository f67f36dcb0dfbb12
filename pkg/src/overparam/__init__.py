"""Over-parametrised parallel logistic networks trained by gradient descent,
with numeric checks of the bounds used in their consistency analysis."""
from .constructions import (CubeSpec, GridSpec, PreconditionError, boundary_strips,
                            indicator_network, indicator_subnetwork, perturb,
                            piecewise_constant_network, select_shift, shifted_grid_network)
from .estimator import (ConditionReport, GDTrace, Hyperparams, OverparamRegressor,
                        TrainingDiverged, empirical_risk, init_weights, predict, risk_gradient,
                        schedule, train, truncate, validate_theorem_conditions)
from .experiments import (Constants, CurveResult, CurveRow, DataSpec, consistency_curve,
                          generate_dataset, l2_error_mc)
from .net import (Activations, Topology, WeightVector, evaluate, forward, logistic,
                  network_gradient, param_count)
from .theory import (BoundParams, DescentReport, RidgeProblem, covering_bound, descent_report,
                     empirical_cover, gradient_norm_bound, lipschitz_bound, lipschitz_estimate,
                     outer_gd_convergence, pl_slack, ridge_objective, ridge_optimum,
                     trace_descent_report)

__version__ = "0.1.0"

__all__ = [
    "Activations", "BoundParams", "ConditionReport", "Constants", "CubeSpec", "CurveResult",
    "CurveRow", "DataSpec", "DescentReport", "GDTrace", "GridSpec", "Hyperparams",
    "OverparamRegressor", "PreconditionError", "RidgeProblem", "Topology", "TrainingDiverged",
    "WeightVector", "boundary_strips", "consistency_curve", "covering_bound", "descent_report",
    "empirical_cover", "empirical_risk", "evaluate", "forward", "generate_dataset",
    "gradient_norm_bound", "indicator_network", "indicator_subnetwork", "init_weights",
    "l2_error_mc", "lipschitz_bound", "lipschitz_estimate", "logistic", "network_gradient",
    "outer_gd_convergence", "param_count", "perturb", "piecewise_constant_network", "pl_slack",
    "predict", "ridge_objective", "ridge_optimum", "risk_gradient", "schedule", "select_shift",
    "shifted_grid_network", "trace_descent_report", "train", "truncate",
    "validate_theorem_conditions",
]
