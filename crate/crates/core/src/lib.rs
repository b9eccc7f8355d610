pub mod context;
pub mod error;
pub mod forward;
pub mod inversion;
pub mod landscape;
pub mod mittag_leffler;
pub mod oracles;
pub mod quadrature;
pub mod spectral;

pub use context::SolverContext;
pub use error::{Error, Result};
pub use forward::{ForwardModel, InitialCondition, ParameterVector, Trajectory};
pub use spectral::{Grid1D, SpectralDecomposition};
