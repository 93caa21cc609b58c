//! Drift and diffusion estimation from irregularly sampled, noisy 2-D tracks,
//! and closed-form migration proportions between rectangles of a reflecting
//! habitat.

// `!(x > 0.0)` guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod greens;
pub mod model;
pub mod numeric;
pub mod proportions;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use estimate::{
    AxisEstimate, BootstrapCI, BootstrapResult, BootstrapSettings, CollectiveParams, ComparisonRow,
    DiffusionSum, EffectiveParams, IntervalGroup, Parameter, PathIncrements,
};
pub use greens::{CornerCombination, DomainRect, ImageSumControl, Interval};
pub use model::{
    Axis, DiffusionLaw, DriftVector, ErrorCumulants, Increment, IncrementSeries, TrackObservation,
    TrackSeries,
};
pub use proportions::{AreaRect, MotionParams, ProportionMatrix};
pub use simulate::{IntervalDistribution, McProportion, NoiseModel};
