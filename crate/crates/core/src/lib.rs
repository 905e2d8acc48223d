//! Deterministic edge-latency lab: a discrete-event 4G/5G path emulator with
//! three capture taps, a capture analyzer that recovers RTT, SRTT and
//! one-way delays, and a KPI suite built on top.
//!
//! ```
//! use edgelab_core::kpis::{e2e_srt, velocity};
//! let srt = e2e_srt(61.7, 20.3, 5.0);
//! assert_eq!(srt, 87.0);
//! assert!((velocity(1.0f64, 89.31).unwrap() - 40.31).abs() < 0.01);
//! ```

pub mod analyzer;
pub mod config;
pub mod emulator;
pub mod kpis;
pub mod model;
pub mod selftest;
pub mod sweep;

use std::fmt::{Debug, Display};

/// Floating-point type the statistics and KPI formulas are generic over.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

pub type Ecdf64 = kpis::Ecdf<f64>;
pub type Ecdf32 = kpis::Ecdf<f32>;
pub type BoxplotStats64 = kpis::BoxplotStats<f64>;
pub type BoxplotStats32 = kpis::BoxplotStats<f32>;
pub type ErrorPropagation64 = kpis::ErrorPropagation<f64>;
pub type ErrorPropagation32 = kpis::ErrorPropagation<f32>;
