//! Peak fits, global Stark fits and the field-angle fit.

pub mod lm;
mod peak;
mod stark;
mod theta;

pub use lm::{minimize, LeastSquaresProblem, LmOptions, LmReport};
pub use peak::{fit_peak, initial_guess, PeakFit, PeakProblem, Profile};
pub use stark::{
    fit_stark_positions, fit_stark_positions_hamiltonian, Estimate, LineFamily, StarkFitResult, StarkPoint,
};
pub use theta::{fit_theta_r, LambdaPoint, ThetaFit};
