//! Walk-on-Spheres Monte Carlo estimation and neural Walk-on-Spheres training
//! for Poisson problems `Δu = f` in `Ω`, `u = g` on `∂Ω`.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: domains with exact distance functions, projections and samplers.
//! * [`stochastic`]: sphere/ball sampling and the volume-scaled Green's function of the ball.
//! * [`walker`]: the batched Walk-on-Spheres kernel with truncation and control variates.
//! * [`network`]: a residual GELU network with hand-written reverse mode and Adam.
//! * [`trainer`]: vanilla and buffered training loops plus error metrics.
//! * [`benchmarks`]: problem instances with closed-form solutions and the control problem.

pub mod benchmarks;
pub mod error;
pub mod geometry;
pub mod network;
pub mod stochastic;
pub mod trainer;
pub mod walker;

pub use benchmarks::{make_problem, Field, ParamBox, Problem};
pub use error::{Error, Result};
pub use geometry::{Ball, Domain, HyperRectangle, RectangularAnnulus, SphericalAnnulus};
pub use network::{Adam, Architecture, Network};
pub use trainer::{relative_l2_error, train_buffered, train_vanilla, ConvergenceLog, TrainConfig};
pub use walker::{walk, walk_with_control_variate, wos_pointwise, PointEstimate, WoSConfig, WoSResult};
