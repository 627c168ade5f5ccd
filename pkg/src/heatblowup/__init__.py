"""Numerical toolkit for glued type II blowup profiles of the 5-D energy-critical heat equation.

Submodules are imported on first attribute access so that the command-line
runner can set thread counts before numpy is loaded.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "radial": ["RadialGrid", "RadialFn", "FVLaplacian", "inner_radial", "inner_rho", "radial_laplacian"],
    "groundstate": ["eval_Q", "eval_V", "eval_LambdaQ", "gamma_second_solution", "norms"],
    "spectral": ["EigenPair", "eigen_ball", "mu2_scaling_exponent", "ground_envelope_check",
                 "perturbed_pM", "barrier_p"],
    "selfsimilar": ["PolyRadial", "CaloricFn", "basis_coeffs", "caloric_eval", "semigroup_apply",
                    "bound_check_L36", "forced_ou_solve"],
    "matching": ["compute_constants", "alpha_closed_form", "lambda_ode_solve", "fit_scaling_law", "time_change"],
    "ansatz": ["AnsatzState", "cutoffs", "extend_w", "forcing_G_in", "forcing_h_out", "forcing_h_in",
               "nonlinear_N", "forcing_G_out", "project_G_out", "full_residual", "envelope_audit"],
    "evolve": ["EvolveConfig", "evolve_nonlinear", "evolve_heat", "evolve_inner_linear", "ansatz_shorttime_run"],
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}
__all__ = ["__version__", *_WHERE]


def __getattr__(name):
    if name in _WHERE:
        return getattr(import_module(f".{_WHERE[name]}", __name__), name)
    if name in _EXPORTS or name in ("cli", "errors", "cutoff"):
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
