//! Training stages, plan validation, and sequential plan execution.

pub mod plan;
pub mod runner;

pub use plan::{
    enumerate_paper_plans, validate_plan, CurriculumPlan, ObjectiveKind, Setting, Stage, StageName, Violation,
    DEFAULT_BATCH_SIZE, DEFAULT_SEED,
};
pub use runner::{run_curriculum, run_curriculum_from, run_stage, StageInput, StageLog, TrainOptions, TrainingData};
