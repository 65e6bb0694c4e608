"""Closed-loop simulation of energy-shaping DC bus voltage control.

A DC-DC converter (averaged model) feeds a composite load -- constant
impedance, constant current, and constant power in parallel -- through a
line inductor.  The package implements the plant in disturbance-lumped
nominal form, steady-state and dynamic reference generation, an internal-
model disturbance observer, a family of duty-ratio controllers (energy
shaping with exact or estimated disturbances, PI, a proportional
passivity-based baseline, and a simplified source-voltage-adaptive
variant), energy-function diagnostics with a guaranteed-convergence region
sampler, a deterministic fixed-step simulation engine with timed events and
measurement noise, and a scenario-file command line interface.
"""

from .controllers import (CONTROLLER_KINDS, ControllerConfig, EscState,
                          aesc_duty, esc_duty, esc_integrator_rate, pi_duty,
                          rpbc_duty_rate, saturate_duty, simplified_aesc_duty,
                          static_reference_from_estimates)
from .engine import (BatchResult, Event, Metrics, NoiseSpec, Scenario,
                     Trace, TraceRecord, compute_metrics, inject_noise,
                     max_batch_workers, rk4_step, run_batch, run_scenario)
from .observer import (ObserverGains, ObserverState, disturbance_estimate,
                       gain_stability_check, observer_derivative,
                       simplified_E_observer)
from .plant import (CircuitParams, CplSingularityError, DisturbanceVector,
                    ExoSystem, PlantState, exo_advance, lumped_disturbances,
                    ph_consistency_check, plant_derivative, storage_energy)
from .reference import (ReferenceState, UnreachableReferenceError,
                        mu_star_dynamic, reference_derivative,
                        solve_equilibrium, x3_star_from_balance)
from .scenario import (ScenarioError, bundled_scenario_path, dump_scenario,
                       list_bundled, load_scenario, parse_scenario,
                       scenario_to_dict, with_overrides)
from .stability import (ErrorState, UnreachableDomainError, hd_energy,
                        initial_membership, momentary_condition,
                        sample_domain)
from .tuning import grid_search_pi

__version__ = "1.0.0"

__all__ = [
    "BatchResult", "CONTROLLER_KINDS", "CircuitParams", "ControllerConfig",
    "CplSingularityError", "DisturbanceVector", "ErrorState", "EscState",
    "Event", "ExoSystem", "Metrics", "NoiseSpec", "ObserverGains",
    "ObserverState", "PlantState", "ReferenceState", "Scenario",
    "ScenarioError", "Trace", "TraceRecord", "UnreachableDomainError",
    "UnreachableReferenceError", "aesc_duty", "bundled_scenario_path",
    "compute_metrics", "disturbance_estimate", "dump_scenario", "esc_duty",
    "esc_integrator_rate", "exo_advance", "gain_stability_check",
    "grid_search_pi", "hd_energy", "initial_membership", "inject_noise",
    "list_bundled", "load_scenario", "lumped_disturbances",
    "max_batch_workers", "momentary_condition", "mu_star_dynamic",
    "observer_derivative", "parse_scenario", "ph_consistency_check",
    "pi_duty", "plant_derivative", "reference_derivative", "rk4_step",
    "rpbc_duty_rate", "run_batch", "run_scenario", "sample_domain",
    "saturate_duty", "scenario_to_dict", "simplified_E_observer",
    "simplified_aesc_duty", "solve_equilibrium",
    "static_reference_from_estimates", "storage_energy",
    "with_overrides", "x3_star_from_balance",
]
