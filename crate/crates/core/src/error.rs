use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("change `{0}` is not applicable to the model")]
    InapplicableChange(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no plan reaches the goal")]
    Unsolvable,

    #[error("robot plan is not optimal in the robot model (plan cost {plan_cost}, optimal {optimal_cost})")]
    RobotPlanNotOptimal { plan_cost: f64, optimal_cost: f64 },

    #[error("no complete explanation exists, not even the full model difference")]
    NoCompleteExplanation,

    #[error("explanation set of {size} changes exceeds the limit of {limit}")]
    LatticeTooLarge { size: usize, limit: usize },

    #[error("change `{0}` has no grid coordinates")]
    UnknownContingency(String),

    #[error("weight vector has {found} entries, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid trace for scenario `{scenario}`: {reason}")]
    InvalidTrace { scenario: String, reason: String },

    #[error("training diverged at iteration {iteration}: log-likelihood fell for {streak} consecutive iterations")]
    Diverged { iteration: usize, streak: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario `{0}` has no start-to-goal path in the robot maze")]
    UnsolvableScenario(String),

    #[error("scenario generation gave up after {attempts} attempts")]
    GenerationExhausted { attempts: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
