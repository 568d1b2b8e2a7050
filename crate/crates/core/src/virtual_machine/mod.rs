//! Synthetic five-axis machine: interpolator, servo loops and structure,
//! producing controller, encoder and sensor streams with known truth.

mod campaign;
mod planner;
mod program;
mod servo;
mod structure;

pub use campaign::{
    run_campaign, simulate_and_write, simulate_session, write_session, CampaignConfig, CampaignEntry, GroundTruth,
    SimulatedSession, TruthSummary, CONTROLLER_FILE, DEFAULT_DRIFT_STEP_UM, DEFAULT_FEEDS, ENCODER_FILE, SENSOR_FILE,
    TRUTH_FILE, TRUTH_SAMPLES_FILE, WrittenSession,
};
pub use planner::{plan_profile, plan_trajectory, BlendedPath, PlannedTrajectory};
pub use program::{default_path, AxisLimits, PathPoint, Segment, TrajectoryProgram, AXES, DEFAULT_CORNER_TOLERANCE, DEFAULT_ROTARY_WAYPOINTS};
pub use servo::{servo_response, SecondOrder, ServoParams};
pub use structure::{synthesize_measurement, Axis, MotionErrorTerm, StructureParams, Synthesis, SynthesisComponents};
