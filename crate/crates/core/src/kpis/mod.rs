//! KPI suite: distributions, availability, reliability, clock-error
//! propagation, service response time, velocity bound and throughput demand.

mod report;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{build_report, ClassKpis, E2eSrt, KpiReport, KpiRow, OwdKpis, Reliability, ReportConfig, ScenarioLabel, TrafficClass, Velocity, write_csv, CSV_HEADER};
pub use stats::{boxplot_stats, ecdf, latency_at, mean, reliability, BoxplotStats, Ecdf};

use crate::model::{Tech, VideoConfig};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KpiError {
    #[error("no samples")]
    Empty,
    #[error("sample set contains NaN")]
    NotANumber,
    #[error("probability {0} outside (0, 1]")]
    Probability(f64),
    #[error("{0}")]
    Domain(String),
}

/// Percentage of sent packets that were delivered.
pub fn availability<T: Scalar>(sent: u64, delivered: u64) -> Result<T, KpiError> {
    if sent == 0 {
        return Err(KpiError::Domain("availability needs at least one sent packet".into()));
    }
    if delivered > sent {
        return Err(KpiError::Domain(format!("delivered {delivered} exceeds sent {sent}")));
    }
    let c = |v: u64| T::from_u64(v).expect("representable");
    Ok(c(100) * c(delivered) / c(sent))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPropagation<T> {
    /// Root sum of squares of the node sigmas.
    pub quadrature_ms: T,
    /// Plain sum of the node sigmas.
    pub linear_sum_ms: T,
}

/// Combines independent per-node clock-offset sigmas for a quantity that
/// sums the three node errors.
pub fn propagate_error<T: Scalar>(sigma_a: T, sigma_b: T, sigma_c: T) -> Result<ErrorPropagation<T>, KpiError> {
    let sigmas = [sigma_a, sigma_b, sigma_c];
    if sigmas.iter().any(|s| !(*s >= T::zero())) {
        return Err(KpiError::Domain("sigma must be >= 0".into()));
    }
    Ok(ErrorPropagation {
        quadrature_ms: sigmas.iter().fold(T::zero(), |a, s| a + *s * *s).sqrt(),
        linear_sum_ms: sigmas.iter().fold(T::zero(), |a, s| a + *s),
    })
}

/// E2E service response time: uplink frame OWD + processing + downlink
/// response OWD.
pub fn e2e_srt<T: Scalar>(owd_up_ms: T, processing_ms: T, owd_down_ms: T) -> T {
    owd_up_ms + processing_ms + owd_down_ms
}

/// Highest speed, km/h, at which a vehicle covers at most `distance_m`
/// during one service response time.
pub fn velocity<T: Scalar>(distance_m: T, e2e_srt_ms: T) -> Result<T, KpiError> {
    if !(e2e_srt_ms > T::zero()) {
        return Err(KpiError::Domain("response time must be > 0".into()));
    }
    if !(distance_m >= T::zero()) {
        return Err(KpiError::Domain("distance must be >= 0".into()));
    }
    let c = |v: f64| T::from_f64(v).expect("representable");
    Ok(distance_m / (e2e_srt_ms / c(1000.0)) * c(3.6))
}

/// Relative reduction of `value_ms` against `baseline_ms`, percent.
pub fn improvement_pct<T: Scalar>(baseline_ms: T, value_ms: T) -> Result<T, KpiError> {
    if !(baseline_ms > T::zero()) {
        return Err(KpiError::Domain("baseline must be > 0".into()));
    }
    Ok(T::from_f64(100.0).expect("representable") * (baseline_ms - value_ms) / baseline_ms)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Fits,
    Exceeds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapVerdict {
    pub tech: Tech,
    pub cap_mbps: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputDemand {
    pub demand_mbps: f64,
    pub verdicts: Vec<CapVerdict>,
}

impl ThroughputDemand {
    pub fn verdict(&self, tech: Tech) -> Option<Verdict> {
        self.verdicts.iter().find(|v| v.tech == tech).map(|v| v.verdict)
    }
}

/// Bitrate needed by a video configuration, judged against both
/// technologies' maximum achievable bandwidth.
pub fn demanded_throughput(cfg: &VideoConfig) -> ThroughputDemand {
    throughput_verdicts(cfg.mean_frame_bytes as f64 * 8.0 * cfg.fps / 1e6)
}

pub fn throughput_verdicts(demand_mbps: f64) -> ThroughputDemand {
    let verdicts = [Tech::FiveG, Tech::FourG]
        .into_iter()
        .map(|tech| {
            let cap = tech.default_bandwidth_cap();
            CapVerdict {
                tech,
                cap_mbps: cap,
                verdict: if demand_mbps <= cap { Verdict::Fits } else { Verdict::Exceeds },
            }
        })
        .collect();
    ThroughputDemand { demand_mbps, verdicts }
}
