"""Planning toolkit for robotic tree pruning.

Pipeline: labeled point cloud -> skeleton labels -> cut commands ->
candidate pose rings -> scored IK candidates -> RRT-Connect approach
trajectory -> servoed advance to the cut.
"""

from .collision import (
    Capsule,
    CollisionWorld,
    capsule_distance,
    clearance,
    config_in_collision,
    config_in_collision_batch,
    edge_valid,
    segment_distance,
)
from .controller import (
    ExecutionOutcome,
    ServoConfig,
    pbs_step,
    pose_error,
    simulate_approach,
)
from .errors import (
    DegeneratePoseError,
    EmptyResultError,
    InputError,
    PrunekitError,
)
from .harness import (
    METHODS,
    ExperimentReport,
    Scenario,
    TrialRecord,
    aggregate,
    base_pose_grid,
    cut_worlds,
    emit_report,
    read_report,
    run_bench,
    run_scenario,
)
from .kinematics import (
    IKSolutionSet,
    KinematicChain,
    default_chain,
    forward_kinematics,
    ik_diverse_set,
    ik_single,
    jacobian,
    load_chain,
    manipulability,
    save_chain,
)
from .planner import (
    Candidate,
    CostBreakdown,
    PlanRequest,
    PlanResult,
    Trajectory,
    collision_cost,
    evaluate_candidates,
    holistic_plan,
    joint_cost,
    plan_tree,
    rrt_connect,
)
from .posegen import (
    PoseRing,
    cutting_orientation,
    default_angles,
    generate_pose_set,
    orthogonal_basis,
    position_on_circle,
)
from .rotations import Pose
from .treemodel import (
    CapsuleSet,
    Cut,
    LabeledPointCloud,
    SynthParams,
    TreeGraph,
    build_collision_primitives,
    crop_and_cluster,
    generate_cuts,
    load_skeleton,
    save_skeleton,
    synth_tree,
    transfer_labels,
)

__version__ = "0.1.0"
