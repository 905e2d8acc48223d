//! Runs the five standard scenarios from one configuration and tabulates
//! them side by side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{analyze, AnalyzeError, Analysis, AnalyzerConfig, Captures, SampleClass};
use crate::config::{LabConfig, SWEEP};
use crate::emulator::{self, CaptureSet, EmulationRun};
use crate::kpis::{build_report, KpiReport, ScenarioLabel};
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{scenario}: {source}")]
    Model {
        scenario: String,
        #[source]
        source: ModelError,
    },
    #[error("{scenario}: {source}")]
    Analyze {
        scenario: String,
        #[source]
        source: AnalyzeError,
    },
}

pub struct ScenarioOutcome {
    pub index: usize,
    pub run: EmulationRun,
    pub captures: CaptureSet,
    pub analysis: Analysis,
    pub report: KpiReport,
}

/// Emulates and analyzes one run end to end.
pub fn run_one(run: &EmulationRun, cfg: &LabConfig, acfg: &AnalyzerConfig) -> Result<(CaptureSet, Analysis, KpiReport), SweepError> {
    let label = run.scenario.label();
    let set = emulator::run(run).map_err(|source| SweepError::Model { scenario: label.clone(), source })?;
    let captures = Captures {
        ue: set.ue.clone(),
        core: set.core.clone(),
        app: set.app.clone(),
        ntp: Some(set.ntp.clone()),
    };
    let analysis = analyze(&captures, acfg).map_err(|source| SweepError::Analyze { scenario: label, source })?;
    let report = build_report(&analysis, &cfg.report, ScenarioLabel::of(&run.scenario));
    Ok((set, analysis, report))
}

/// Runs every scenario of [`SWEEP`] concurrently. Scenario `i` uses seed
/// `cfg.seed + i`, so results do not depend on scheduling.
pub fn run_sweep(cfg: &LabConfig, acfg: &AnalyzerConfig) -> Result<Vec<ScenarioOutcome>, SweepError> {
    let runs = SWEEP
        .iter()
        .enumerate()
        .map(|(i, &(tech, range))| {
            cfg.resolve_for(tech, range, cfg.seed.wrapping_add(i as u64)).map_err(|source| SweepError::Model {
                scenario: format!("{}-{}", tech.label(), range.as_str()),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = runs.iter().map(|run| s.spawn(move || run_one(run, cfg, acfg))).collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    runs.into_iter()
        .zip(results)
        .enumerate()
        .map(|(index, (run, r))| {
            let (captures, analysis, report) = r?;
            Ok(ScenarioOutcome { index, run, captures, analysis, report })
        })
        .collect()
}

/// One row of the scenario comparison: the response time and velocity bound
/// at the configured reliability level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub tech: String,
    pub range: String,
    pub distance_km: u32,
    pub owd_frame_ms: Option<f64>,
    pub processing_ms: Option<f64>,
    pub e2e_srt_ms: Option<f64>,
    pub velocity_kmh: Option<f64>,
}

pub const COMPARISON_HEADER: &str = "scenario,tech,range,distance_km,owd_frame_ms,processing_ms,e2e_srt_ms,velocity_kmh";

pub fn comparison(outcomes: &[ScenarioOutcome]) -> Vec<ComparisonRow> {
    outcomes
        .iter()
        .map(|o| {
            let r = &o.report;
            ComparisonRow {
                scenario: r.label.scenario.clone(),
                tech: r.label.tech.clone(),
                range: r.label.range.clone(),
                distance_km: o.run.scenario.range().distance_km(),
                owd_frame_ms: r.e2e_srt.as_ref().map(|e| e.owd_up_ms),
                processing_ms: r.e2e_srt.as_ref().map(|e| e.processing_ms),
                e2e_srt_ms: r.e2e_srt.as_ref().map(|e| e.srt_assumed_ms),
                velocity_kmh: r.velocity.as_ref().map(|v| v.kmh),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = format!("{COMPARISON_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.tech,
            r.range,
            r.distance_km,
            cell(r.owd_frame_ms),
            cell(r.processing_ms),
            cell(r.e2e_srt_ms),
            cell(r.velocity_kmh)
        ));
    }
    s
}

/// Classes shown in the median table.
pub const MEDIAN_CLASSES: [SampleClass; 6] = [
    SampleClass::CtrlRtt,
    SampleClass::TcpRtt,
    SampleClass::FrameLatency,
    SampleClass::OwdCtrl,
    SampleClass::OwdPacket,
    SampleClass::OwdFrame,
];

/// Median of each class in [`MEDIAN_CLASSES`], `None` when the class is
/// empty.
pub fn medians(analysis: &Analysis) -> Vec<(SampleClass, Option<f64>)> {
    MEDIAN_CLASSES
        .iter()
        .map(|&c| (c, crate::kpis::boxplot_stats(&analysis.samples(c)).ok().map(|b| b.median)))
        .collect()
}

pub fn median_csv(outcomes: &[ScenarioOutcome]) -> String {
    let mut s = String::from("scenario");
    for c in MEDIAN_CLASSES {
        s.push(',');
        s.push_str(c.as_str());
    }
    s.push('\n');
    for o in outcomes {
        s.push_str(&o.report.label.scenario);
        for (_, m) in medians(&o.analysis) {
            s.push(',');
            s.push_str(&cell(m));
        }
        s.push('\n');
    }
    s
}
