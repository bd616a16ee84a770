pub mod dynamics;
pub mod error;
pub mod fractal;
pub mod integrator;
pub mod lyapunov;
pub mod nodemap;
pub mod ode;
pub mod par;
pub mod seed;
pub mod transport;

pub use error::{Error, Result};
