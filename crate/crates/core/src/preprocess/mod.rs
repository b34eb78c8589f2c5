//! Measurement pretreatment: noise injection, smoothing, finite-difference
//! derivatives and the temporal train/test split.

mod derivatives;
mod noise;
mod smoothing;
mod split;

pub use derivatives::{compute_derivatives, DerivPoint, DerivativeField};
pub use noise::{add_noise, NoiseSpec};
pub use smoothing::{
    fluctuation, pretreat, smooth_field, smooth_series, AxisWindow, Pretreatment, SmoothingConfig, SmoothingKernel,
};
pub use split::{split_train_test, DataSplit};
