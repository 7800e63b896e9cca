//! Cell-free Massive MIMO system simulator: deployments, channels, pilot
//! assignment, DL power control and AP selection, spectral efficiency,
//! clock-bias calibration and radio-stripe processing.
//!
//! Most of the library is generic over the scalar type through
//! [`num::Real`]; the aliases below fix it to `f64` or `f32`. The max-min
//! solver works in `f64`, and the calibration algebra accepts any
//! [`num_traits::Num`] type, exact rationals included.

pub mod campaign;
pub mod channel;
pub mod error;
pub mod num;
pub mod performance;
pub mod pilots;
pub mod power;
pub mod scenario;
pub mod stripe;
pub mod sync;

pub use campaign::{run_campaign, run_drop, run_macro_diversity, CampaignReport, CampaignSpec};
pub use channel::{estimate_quality, large_scale, small_scale, PathLossParams};
pub use error::{Error, Result};
pub use num::{Cx, Matrix, Real};
pub use performance::{cdf_summary, orthogonality, se_closed_form, se_monte_carlo, GainMode};
pub use pilots::{PilotAssignment, PilotStrategy};
pub use power::{cdfpt, dl_sinr, maxmin, MaxMinOptions, Policy};
pub use scenario::{Deployment, FrameConfig, ScenarioConfig};

pub type Layout = scenario::Layout<f64>;
pub type LargeScaleMatrix = channel::LargeScaleMatrix<f64>;
pub type EstimateQuality = channel::EstimateQuality<f64>;
pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type PowerAllocation = power::PowerAllocation<f64>;
pub type CdfSummary = performance::CdfSummary<f64>;
pub type SEResult = performance::SEResult<f64>;
pub type ClockBias = sync::ClockBias<f64>;
pub type TimestampMatrix = sync::TimestampMatrix<f64>;
pub type CalibrationResult = sync::CalibrationResult<f64>;
pub type StreamFrame = stripe::StreamFrame<f64>;
pub type ApuState = stripe::ApuState<f64>;

pub type LayoutF32 = scenario::Layout<f32>;
pub type LargeScaleMatrixF32 = channel::LargeScaleMatrix<f32>;
pub type EstimateQualityF32 = channel::EstimateQuality<f32>;
pub type PowerAllocationF32 = power::PowerAllocation<f32>;
pub type CdfSummaryF32 = performance::CdfSummary<f32>;
