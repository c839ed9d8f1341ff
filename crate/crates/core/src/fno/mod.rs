//! Neural operator for canvas fields: a Fourier layer stack between
//! pointwise lift and decode networks, trained with Adam.
//!
//! Two output heads share the trunk. `Field` emits the solution
//! directly on the input grid. `TfpmCoeffs` emits per-cell exponential
//! expansion coefficients instead; paired with the frozen cell context
//! (decay rate and particular value from the known coefficients) the
//! prediction is reconstructed on an arbitrarily fine grid, and the
//! training loss is taken after that reconstruction, so gradients flow
//! through the basis evaluation.

mod gemm;

pub mod checkpoint;
pub mod head;
pub mod loss;
pub mod model;
pub mod spectral;
pub mod train;

pub use checkpoint::{load, save};
pub use head::{reconstruct_head, CellContext};
pub use loss::{loss_l2, quadrature_weights, relative_l2, RelL2};
pub use model::{Arch, BlockInfo, FnoModel, HeadKind, Trace, HIDDEN};
pub use spectral::{identity_spectral_weights, modes_per_axis, num_modes, spectral_conv};
pub use train::{
    compute_gradients, evaluate, train, Adam, Precision, Staged, TrainConfig, TrainReport,
    TrainSample,
};
