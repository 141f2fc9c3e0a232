mod params;
mod state;
mod step;

pub use params::{ModelParams, ParamsBuilder, Policy, Variant};
pub use state::{new_state, InitSpec, RingState};
pub use step::{
    csma_fire_pattern, eligibility, step, step_csma, step_sts, step_tasep_h, step_zero_range,
    MoveRecord,
};
