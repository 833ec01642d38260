//! Bound-constrained quasi-Newton minimization and story fitting.

mod lbfgsb;
mod story;

pub use lbfgsb::{
    central_difference_gradient, minimize, Bounds, Minimum, OptimizerConfig, Termination,
};
pub use story::{
    extract_story, fit_story, initialize_solution, solution_bounds, RankedDocument, RestartOutcome,
    Story, StoryResult, StorySegment,
};
