//! Path simulation and reflection maps.

mod path;
mod reflect;
mod rng;

pub use path::{
    sample_background, simulate_input_path, simulate_path_from, supports_events, Discretization,
    PathGrid, DEFAULT_STEP,
};
pub use reflect::{
    coupled_pair, gamma_lower, gamma_upper, lindley_waiting_times, reflect, reflect_one_sided,
    reflect_two_sided, CoupledPair, ReflectedPath,
};
pub use rng::{RngStreamSpec, StreamRole};
