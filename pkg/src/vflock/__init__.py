"""V-formation control lab.

Generate expert trajectories with a centralized adaptive-horizon MPC
teacher, train a distributed neural controller by imitation, improve it
with counterexample-guided retraining, verify it statistically, and stress
it against configurations that defeat symmetric distributed control.
"""

from .cegkr import CegkrConfig, RoundReport, cegkr_run, evaluate_controller, harvest_retraining_states
from .config import ExperimentConfig, desk_config, load_config, paper_config, preset, save_config
from .cost import (
    CostBreakdown,
    CostParameters,
    clear_view,
    global_cost,
    local_cost,
    make_v_formation,
    upwash_benefit_pair,
    upwash_cost,
    velocity_matching,
)
from .flock import (
    DynamicsParameters,
    FlockState,
    JointAction,
    LocalView,
    clamp_action,
    local_view,
    neighborhood,
    sample_initial_state,
    step_dynamics,
)
from .mpc import (
    CampcConfig,
    DampcConfig,
    campc_controller,
    campc_step,
    campc_trajectory,
    dampc_controller,
    dampc_step,
)
from .nn import (
    AdamState,
    MlpModel,
    TrainConfig,
    TrainingSample,
    adam_step,
    dnc_controller,
    dnc_step,
    extract_samples,
    init_adam,
    init_model,
    mlp_forward,
    mlp_gradient,
    train,
)
from .pso import PsoParameters, PsoResult, action_bounds, pso_minimize
from .scenarios import (
    AveragingController,
    Scenario,
    ScenarioVerdict,
    default_registry,
    run_scenario,
    scenario_circle8,
    scenario_diamond,
    scenario_disconnected_vs,
)
from .serialize import (
    ResultsTable,
    read_dataset,
    read_model,
    read_trajectory,
    write_dataset,
    write_model,
    write_trajectory,
)
from .smc import SmcConfig, SmcReport, SmcSample, monitor_costs, run_trial, sample_count, smc_estimate
from .trajectory import Trajectory, first_passage_step, run_closed_loop, sustained_step

__version__ = "0.1.0"
