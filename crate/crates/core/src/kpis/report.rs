//! Per-scenario KPI report assembled from analyzer output.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    availability, boxplot_stats, e2e_srt, latency_at, mean, propagate_error, reliability, throughput_verdicts, velocity,
    BoxplotStats, ErrorPropagation, ThroughputDemand,
};
use crate::analyzer::{srtt, Analysis};
use crate::model::{ProcessingModel, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrafficClass {
    #[serde(rename = "CTRL")]
    Ctrl,
    #[serde(rename = "STREAM-packet")]
    StreamPacket,
    #[serde(rename = "STREAM-frame")]
    StreamFrame,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [TrafficClass::Ctrl, TrafficClass::StreamPacket, TrafficClass::StreamFrame];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Ctrl => "CTRL",
            TrafficClass::StreamPacket => "STREAM-packet",
            TrafficClass::StreamFrame => "STREAM-frame",
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Round-trip latency distribution of one traffic class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassKpis {
    pub class: TrafficClass,
    pub samples: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub boxplot: BoxplotStats<f64>,
    /// Final value of the smoothed series.
    pub srtt_last_ms: f64,
    pub srtt_mean_ms: f64,
}

/// One-way delay summary; `sigma_ms` is the propagated clock error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwdKpis {
    pub class: TrafficClass,
    pub samples: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub sigma_ms: f64,
    pub sigma_linear_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub class: TrafficClass,
    pub bound_ms: f64,
    /// Fraction of one-way delays within the bound.
    pub within_bound: f64,
    pub level: f64,
    pub latency_at_level_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E2eSrt {
    /// Uplink frame OWD at the reliability level.
    pub owd_up_ms: f64,
    pub processing_ms: f64,
    pub owd_down_assumed_ms: f64,
    pub srt_assumed_ms: f64,
    /// Downlink command OWD at the reliability level, when measured.
    pub owd_down_measured_ms: Option<f64>,
    pub srt_measured_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub distance_m: f64,
    pub srt_ms: f64,
    pub kmh: f64,
    pub kmh_measured_down: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub scenario: String,
    pub tech: String,
    pub range: String,
}

impl ScenarioLabel {
    pub fn of(s: &Scenario) -> Self {
        ScenarioLabel {
            scenario: s.label(),
            tech: s.tech().label().to_string(),
            range: s.range().as_str().to_string(),
        }
    }

    pub fn unknown() -> Self {
        ScenarioLabel {
            scenario: "unknown".into(),
            tech: String::new(),
            range: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Service time bound for the reliability fraction.
    pub reliability_bound_ms: f64,
    /// Percentile used for reliability, response time and velocity.
    pub reliability_level: f64,
    pub distance_m: f64,
    pub owd_down_assumed_ms: f64,
    /// Used when the captures hold no processing measurement.
    pub processing_fallback_ms: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            reliability_bound_ms: 100.0,
            reliability_level: 0.95,
            distance_m: 1.0,
            owd_down_assumed_ms: 5.0,
            processing_fallback_ms: ProcessingModel::default().tau_total_ms(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub label: ScenarioLabel,
    pub latency: Vec<ClassKpis>,
    pub owd: Vec<OwdKpis>,
    pub clock_error: ErrorPropagation<f64>,
    pub availability_pct: Option<f64>,
    pub reliability: Option<Reliability>,
    pub processing_ms: Option<f64>,
    pub e2e_srt: Option<E2eSrt>,
    pub velocity: Option<Velocity>,
    pub throughput: Option<ThroughputDemand>,
    pub bulk_goodput_mbps: Option<f64>,
    /// KPIs that could not be computed, as `class/metric`.
    pub absent: Vec<String>,
    pub warnings: Vec<String>,
}

impl KpiReport {
    pub fn latency(&self, class: TrafficClass) -> Option<&ClassKpis> {
        self.latency.iter().find(|c| c.class == class)
    }

    pub fn owd(&self, class: TrafficClass) -> Option<&OwdKpis> {
        self.owd.iter().find(|c| c.class == class)
    }
}

fn class_kpis(class: TrafficClass, samples: &[f64], alpha: f64) -> Option<ClassKpis> {
    let boxplot = boxplot_stats(samples).ok()?;
    let smoothed = srtt(samples, alpha);
    Some(ClassKpis {
        class,
        samples: samples.len(),
        mean_ms: mean(samples)?,
        median_ms: boxplot.median,
        p95_ms: latency_at(samples, 0.95).ok()?,
        boxplot,
        srtt_last_ms: *smoothed.last()?,
        srtt_mean_ms: mean(&smoothed)?,
    })
}

fn owd_kpis(class: TrafficClass, samples: &[f64], sigma: &ErrorPropagation<f64>) -> Option<OwdKpis> {
    Some(OwdKpis {
        class,
        samples: samples.len(),
        mean_ms: mean(samples)?,
        median_ms: boxplot_stats(samples).ok()?.median,
        p95_ms: latency_at(samples, 0.95).ok()?,
        sigma_ms: sigma.quadrature_ms,
        sigma_linear_ms: sigma.linear_sum_ms,
    })
}

/// Computes every KPI the samples allow. Missing classes leave their fields
/// empty and are listed in `absent`.
pub fn build_report(analysis: &Analysis, cfg: &ReportConfig, label: ScenarioLabel) -> KpiReport {
    let mut absent = Vec::new();
    let s = analysis.offsets.sigmas_ms();
    let clock_error = propagate_error(s[0], s[1], s[2]).unwrap_or(ErrorPropagation {
        quadrature_ms: f64::NAN,
        linear_sum_ms: f64::NAN,
    });

    let rtt_sets = [
        (TrafficClass::Ctrl, &analysis.ctrl_rtt.samples_ms),
        (TrafficClass::StreamPacket, &analysis.tcp_rtt.samples_ms),
        (TrafficClass::StreamFrame, &analysis.frame_latency.samples_ms),
    ];
    let mut latency = Vec::new();
    for (class, samples) in rtt_sets {
        match class_kpis(class, samples, analysis.alpha) {
            Some(k) => latency.push(k),
            None => absent.push(format!("{class}/latency")),
        }
    }

    let owd_sets = [
        (TrafficClass::Ctrl, &analysis.owd_ctrl.samples_ms),
        (TrafficClass::StreamPacket, &analysis.owd_packet.samples_ms),
        (TrafficClass::StreamFrame, &analysis.owd_frame.samples_ms),
    ];
    let mut owd = Vec::new();
    for (class, samples) in owd_sets {
        match owd_kpis(class, samples, &clock_error) {
            Some(k) => owd.push(k),
            None => absent.push(format!("{class}/owd")),
        }
    }

    let availability_pct = availability::<f64>(analysis.sent, analysis.delivered).ok();
    if availability_pct.is_none() {
        absent.push("ALL/availability".into());
    }

    let frame_owd = &analysis.owd_frame.samples_ms;
    let reliability = match (
        reliability(frame_owd, cfg.reliability_bound_ms),
        latency_at(frame_owd, cfg.reliability_level),
    ) {
        (Ok(within_bound), Ok(at)) => Some(Reliability {
            class: TrafficClass::StreamFrame,
            bound_ms: cfg.reliability_bound_ms,
            within_bound,
            level: cfg.reliability_level,
            latency_at_level_ms: at,
        }),
        _ => {
            absent.push("STREAM-frame/reliability".into());
            None
        }
    };

    let processing_ms = mean(&analysis.processing_ms);
    if processing_ms.is_none() {
        absent.push("STREAM-frame/processing".into());
    }

    let (e2e, vel) = match &reliability {
        Some(r) => {
            let tau = processing_ms.unwrap_or(cfg.processing_fallback_ms);
            let down = latency_at(&analysis.owd_down.samples_ms, cfg.reliability_level).ok();
            let srt = e2e_srt(r.latency_at_level_ms, tau, cfg.owd_down_assumed_ms);
            let srt_measured = down.map(|d| e2e_srt(r.latency_at_level_ms, tau, d));
            let e2e = E2eSrt {
                owd_up_ms: r.latency_at_level_ms,
                processing_ms: tau,
                owd_down_assumed_ms: cfg.owd_down_assumed_ms,
                srt_assumed_ms: srt,
                owd_down_measured_ms: down,
                srt_measured_ms: srt_measured,
            };
            let vel = velocity(cfg.distance_m, srt).ok().map(|kmh| Velocity {
                distance_m: cfg.distance_m,
                srt_ms: srt,
                kmh,
                kmh_measured_down: srt_measured.and_then(|m| velocity(cfg.distance_m, m).ok()),
            });
            (Some(e2e), vel)
        }
        None => {
            absent.push("STREAM-frame/e2e_srt".into());
            absent.push("STREAM-frame/velocity".into());
            (None, None)
        }
    };

    let throughput = analysis
        .video_profile
        .map(|(bytes, fps)| throughput_verdicts(bytes * 8.0 * fps / 1e6));
    if throughput.is_none() {
        absent.push("STREAM-frame/throughput_demand".into());
    }

    KpiReport {
        label,
        latency,
        owd,
        clock_error,
        availability_pct,
        reliability,
        processing_ms,
        e2e_srt: e2e,
        velocity: vel,
        throughput,
        bulk_goodput_mbps: analysis.bulk_goodput_mbps,
        absent,
        warnings: analysis.warnings.clone(),
    }
}

pub const CSV_HEADER: &str = "scenario,tech,range,class,metric,value,unit,sigma";

/// One KPI, flattened for CSV and NDJSON output. `value` is empty for
/// absent KPIs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiRow {
    pub scenario: String,
    pub tech: String,
    pub range: String,
    pub class: String,
    pub metric: String,
    pub value: Option<f64>,
    pub unit: String,
    pub sigma: Option<f64>,
}

impl KpiReport {
    pub fn rows(&self) -> Vec<KpiRow> {
        let mut rows = Vec::new();
        let mut push = |class: &str, metric: &str, value: Option<f64>, unit: &str, sigma: Option<f64>| {
            rows.push(KpiRow {
                scenario: self.label.scenario.clone(),
                tech: self.label.tech.clone(),
                range: self.label.range.clone(),
                class: class.to_string(),
                metric: metric.to_string(),
                value,
                unit: unit.to_string(),
                sigma,
            });
        };
        for k in &self.latency {
            let c = k.class.as_str();
            push(c, "latency_samples", Some(k.samples as f64), "count", None);
            push(c, "latency_mean", Some(k.mean_ms), "ms", None);
            push(c, "latency_median", Some(k.median_ms), "ms", None);
            push(c, "latency_p95", Some(k.p95_ms), "ms", None);
            push(c, "latency_q1", Some(k.boxplot.q1), "ms", None);
            push(c, "latency_q3", Some(k.boxplot.q3), "ms", None);
            push(c, "latency_min", Some(k.boxplot.min), "ms", None);
            push(c, "latency_max", Some(k.boxplot.max), "ms", None);
            push(c, "latency_outliers", Some(k.boxplot.outliers.len() as f64), "count", None);
            push(c, "srtt_last", Some(k.srtt_last_ms), "ms", None);
            push(c, "srtt_mean", Some(k.srtt_mean_ms), "ms", None);
        }
        for k in &self.owd {
            let c = k.class.as_str();
            push(c, "owd_samples", Some(k.samples as f64), "count", None);
            push(c, "owd_mean", Some(k.mean_ms), "ms", Some(k.sigma_ms));
            push(c, "owd_median", Some(k.median_ms), "ms", Some(k.sigma_ms));
            push(c, "owd_p95", Some(k.p95_ms), "ms", Some(k.sigma_ms));
        }
        push("ALL", "clock_error_quadrature", Some(self.clock_error.quadrature_ms), "ms", None);
        push("ALL", "clock_error_linear_sum", Some(self.clock_error.linear_sum_ms), "ms", None);
        if let Some(a) = self.availability_pct {
            push("ALL", "availability", Some(a), "%", None);
        }
        if let Some(r) = &self.reliability {
            let c = r.class.as_str();
            push(c, "reliability_bound", Some(r.bound_ms), "ms", None);
            push(c, "reliability_within_bound", Some(100.0 * r.within_bound), "%", None);
            push(c, "reliability_level", Some(100.0 * r.level), "%", None);
            push(c, "latency_at_level", Some(r.latency_at_level_ms), "ms", Some(self.clock_error.quadrature_ms));
        }
        if let Some(p) = self.processing_ms {
            push("STREAM-frame", "processing_mean", Some(p), "ms", None);
        }
        if let Some(e) = &self.e2e_srt {
            let sigma = Some(self.clock_error.quadrature_ms);
            push("STREAM-frame", "e2e_srt", Some(e.srt_assumed_ms), "ms", sigma);
            push("STREAM-frame", "owd_down_assumed", Some(e.owd_down_assumed_ms), "ms", None);
            push("STREAM-frame", "owd_down_measured", e.owd_down_measured_ms, "ms", sigma);
            push("STREAM-frame", "e2e_srt_measured_down", e.srt_measured_ms, "ms", sigma);
        }
        if let Some(v) = &self.velocity {
            push("STREAM-frame", "velocity", Some(v.kmh), "km/h", None);
            push("STREAM-frame", "velocity_measured_down", v.kmh_measured_down, "km/h", None);
        }
        if let Some(t) = &self.throughput {
            push("STREAM-frame", "demanded_throughput", Some(t.demand_mbps), "Mbit/s", None);
            for v in &t.verdicts {
                let fits = matches!(v.verdict, super::Verdict::Fits);
                push("STREAM-frame", &format!("fits_{}", v.tech.label()), Some(fits as u8 as f64), "bool", None);
            }
        }
        if let Some(g) = self.bulk_goodput_mbps {
            push("STREAM-packet", "bulk_goodput", Some(g), "Mbit/s", None);
        }
        for a in &self.absent {
            let (class, metric) = a.split_once('/').unwrap_or(("ALL", a));
            push(class, &format!("{metric}_absent"), None, "", None);
        }
        rows
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes rows as CSV with [`CSV_HEADER`].
pub fn write_csv<W: Write>(mut w: W, rows: &[KpiRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.scenario),
            csv_field(&r.tech),
            csv_field(&r.range),
            csv_field(&r.class),
            csv_field(&r.metric),
            opt(r.value),
            csv_field(&r.unit),
            opt(r.sigma)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{ClockOffsets, FrameLatency, OwdSamples, RttSamples};

    fn ramp(n: usize, base: f64) -> Vec<f64> {
        (1..=n).map(|i| base + i as f64).collect()
    }

    fn full_analysis() -> Analysis {
        Analysis {
            offsets: ClockOffsets::zero(),
            ctrl_rtt: RttSamples {
                samples_ms: ramp(20, 10.0),
                ..Default::default()
            },
            tcp_rtt: RttSamples {
                samples_ms: ramp(20, 12.0),
                ..Default::default()
            },
            frame_latency: FrameLatency {
                samples_ms: ramp(20, 40.0),
                ..Default::default()
            },
            owd_ctrl: OwdSamples {
                samples_ms: ramp(20, 5.0),
                unmatched: 0,
            },
            owd_packet: OwdSamples {
                samples_ms: ramp(20, 6.0),
                unmatched: 0,
            },
            owd_frame: OwdSamples {
                samples_ms: ramp(100, 0.0),
                unmatched: 0,
            },
            owd_down: OwdSamples {
                samples_ms: vec![4.0; 20],
                unmatched: 0,
            },
            processing_ms: vec![20.3; 20],
            sent: 1000,
            delivered: 1000,
            video_profile: Some((220_000.0, 20.0)),
            bulk_goodput_mbps: None,
            alpha: 0.125,
            warnings: vec![],
        }
    }

    #[test]
    fn fields_equal_direct_operations() {
        let a = full_analysis();
        let r = build_report(&a, &ReportConfig::default(), ScenarioLabel::unknown());
        assert!(r.absent.is_empty(), "{:?}", r.absent);
        assert_eq!(r.availability_pct, Some(100.0));
        let rel = r.reliability.as_ref().unwrap();
        assert_eq!(rel.latency_at_level_ms, 95.0);
        assert_eq!(rel.within_bound, 1.0);
        let e = r.e2e_srt.as_ref().unwrap();
        assert_eq!(e.srt_assumed_ms, e2e_srt(95.0, e.processing_ms, 5.0));
        assert!((e.processing_ms - 20.3).abs() < 1e-12);
        assert_eq!(e.srt_measured_ms, Some(e2e_srt(95.0, e.processing_ms, 4.0)));
        assert_eq!(r.velocity.as_ref().unwrap().kmh, velocity(1.0, e.srt_assumed_ms).unwrap());
        let ctrl = r.latency(TrafficClass::Ctrl).unwrap();
        assert_eq!(ctrl.median_ms, 20.5);
        assert_eq!(ctrl.srtt_last_ms, *srtt(&a.ctrl_rtt.samples_ms, 0.125).last().unwrap());
        assert!((r.throughput.as_ref().unwrap().demand_mbps - 35.2).abs() < 1e-9);
        assert_eq!(r.clock_error.quadrature_ms, 0.0);
    }

    #[test]
    fn empty_video_marks_frame_kpis_absent() {
        let mut a = full_analysis();
        a.frame_latency = FrameLatency::default();
        a.owd_frame = OwdSamples::default();
        a.processing_ms.clear();
        a.video_profile = None;
        let r = build_report(&a, &ReportConfig::default(), ScenarioLabel::unknown());
        assert!(r.latency(TrafficClass::StreamFrame).is_none());
        assert!(r.owd(TrafficClass::StreamFrame).is_none());
        assert!(r.velocity.is_none() && r.e2e_srt.is_none() && r.reliability.is_none());
        for m in ["latency", "owd", "reliability", "velocity", "throughput_demand"] {
            assert!(r.absent.contains(&format!("STREAM-frame/{m}")), "{m}");
        }
        assert!(r.latency(TrafficClass::Ctrl).is_some());
        let rows = r.rows();
        assert!(rows.iter().any(|row| row.metric == "velocity_absent" && row.value.is_none()));
    }

    #[test]
    fn owd_carries_propagated_sigma() {
        let mut a = full_analysis();
        for (n, s) in a.offsets.nodes.iter_mut().zip([0.387, 0.317, 0.117]) {
            n.std_ms = s;
        }
        let r = build_report(&a, &ReportConfig::default(), ScenarioLabel::unknown());
        let o = r.owd(TrafficClass::StreamFrame).unwrap();
        assert!((o.sigma_ms - 0.263947f64.sqrt()).abs() < 1e-12);
        assert!((o.sigma_linear_ms - 0.821).abs() < 1e-12);
        let row = r.rows().into_iter().find(|x| x.metric == "owd_mean" && x.class == "STREAM-frame").unwrap();
        assert_eq!(row.sigma, Some(o.sigma_ms));
    }

    #[test]
    fn csv_shape() {
        let r = build_report(&full_analysis(), &ReportConfig::default(), ScenarioLabel::unknown());
        let mut buf = Vec::new();
        write_csv(&mut buf, &r.rows()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        for l in lines {
            assert_eq!(l.split(',').count(), 8, "{l}");
        }
    }
}
