//! Monte Carlo engine for the mixed Brownian and default-time model:
//! presets, path simulation, martingale z-tests and regression hedging.

pub mod export;
pub mod grid;
pub mod hedge;
pub mod paths;
pub mod payoff;
pub mod pipeline;
pub mod presets;
pub mod ztest;

pub use hedge::{hedge_mc, HedgeReport};
pub use paths::{simulate, Channel, PathBatch, SimConfig};
pub use payoff::Payoff;
pub use pipeline::{exact_triplet, run, ExactTriplet, SimReport};
pub use presets::preset;
pub use ztest::{martingale_ztest, Conditioning, ZTestReport};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] martrep_core::Error),

    #[error("payoff parse error at byte {position}: {message}")]
    Payoff { position: usize, message: String },

    #[error("export failed: {0}")]
    Export(String),
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        SimError::Export(e.to_string())
    }
}
