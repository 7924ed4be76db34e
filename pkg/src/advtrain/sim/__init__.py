from advtrain.sim.scenarios import (
    SCENARIO_IDS,
    ArcLane,
    Box,
    Pose,
    ScenarioSpec,
    StraightLane,
    VehicleParams,
    get_scenario,
)
from advtrain.sim.world import (
    ACTION_DIM,
    OBS_DIM,
    Shaping,
    Action,
    Terminal,
    VehicleState,
    WorldState,
    attacker_reward,
    check_collision,
    observe,
    reset,
    step,
    victim_reward_terms,
    victim_true_reward,
)
