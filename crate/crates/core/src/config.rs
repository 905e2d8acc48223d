//! Sectioned `key = value` run configuration and the manifest that echoes it
//! back with every default resolved.
//!
//! ```text
//! [scenario]
//! tech = FIVE_G
//! range = REGIONAL
//! jitter_std_ms = 0
//!
//! [workload]
//! video = true
//! duration_s = 5
//! ```
//!
//! Keys left out take their defaults. Scenario delay and bandwidth keys that
//! are left out follow the technology, so one file can drive a sweep across
//! 4G and 5G.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::emulator::{BulkProbe, ControlPings, EmulationRun, VideoWorkload, Workload, DEFAULT_MSS};
use crate::kpis::ReportConfig;
use crate::model::{
    default_frame_bytes, ClockModel, Encoder, ModelError, ProcessingModel, Range, Resolution, Scenario, Tech,
    VideoConfig,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: key `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

/// The five emulated scenarios, in sweep order.
pub const SWEEP: [(Tech, Range); 5] = [
    (Tech::FiveG, Range::Edge),
    (Tech::FiveG, Range::Regional),
    (Tech::FiveG, Range::National),
    (Tech::FourG, Range::Regional),
    (Tech::FourG, Range::National),
];

/// Parsed configuration. `None` scenario fields follow the technology.
#[derive(Clone, Debug, PartialEq)]
pub struct LabConfig {
    pub tech: Tech,
    pub range: Range,
    pub base_owd_up_ms: Option<f64>,
    pub base_owd_down_ms: Option<f64>,
    pub jitter_std_ms: f64,
    pub loss_prob: f64,
    /// `None`: technology default. `Some(None)`: cap disabled.
    pub bandwidth_cap_mbps: Option<Option<f64>>,
    pub retransmit: bool,
    pub clocks: ClockModel,
    pub control: Option<ControlPings>,
    pub video: Option<VideoWorkload>,
    pub bulk: Option<BulkProbe>,
    pub processing: ProcessingModel,
    pub seed: u64,
    /// Frame-size seed; follows `seed` when unset.
    pub workload_seed: Option<u64>,
    pub mss: u32,
    pub report: ReportConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            tech: Tech::FiveG,
            range: Range::Edge,
            base_owd_up_ms: None,
            base_owd_down_ms: None,
            jitter_std_ms: 0.5,
            loss_prob: 0.0,
            bandwidth_cap_mbps: None,
            retransmit: false,
            clocks: ClockModel::default(),
            control: Some(ControlPings {
                interval_ms: 100.0,
                count: 100,
            }),
            video: Some(VideoWorkload {
                config: VideoConfig::default(),
                duration_s: 10.0,
            }),
            bulk: None,
            processing: ProcessingModel::default(),
            seed: 1,
            workload_seed: None,
            mss: DEFAULT_MSS,
            report: ReportConfig::default(),
        }
    }
}

impl LabConfig {
    /// The emulation for the configured scenario.
    pub fn resolve(&self) -> Result<EmulationRun, ModelError> {
        self.resolve_for(self.tech, self.range, self.seed)
    }

    /// The emulation for another scenario, keeping every non-scenario
    /// setting. The video content stays tied to the configured seed, so
    /// scenarios run with different `seed`s still stream the same frames.
    pub fn resolve_for(&self, tech: Tech, range: Range, seed: u64) -> Result<EmulationRun, ModelError> {
        let mut scenario = Scenario::new(tech, range)?;
        if let Some(v) = self.base_owd_up_ms {
            scenario.base_owd_up_ms = v;
        }
        if let Some(v) = self.base_owd_down_ms {
            scenario.base_owd_down_ms = v;
        }
        if let Some(cap) = self.bandwidth_cap_mbps {
            scenario.bandwidth_cap_mbps = cap;
        }
        scenario.jitter_std_ms = self.jitter_std_ms;
        scenario.loss_prob = self.loss_prob;
        scenario.retransmit = self.retransmit;
        let run = EmulationRun {
            scenario,
            workload: Workload {
                control: self.control.clone(),
                video: self.video.clone(),
                bulk: self.bulk.clone(),
            },
            clocks: self.clocks.clone(),
            processing: self.processing.clone(),
            seed,
            workload_seed: Some(self.workload_seed.unwrap_or(self.seed)),
            mss: self.mss,
        };
        run.check()?;
        Ok(run)
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

const SECTIONS: [&str; 8] = ["scenario", "clocks", "workload", "video", "processing", "run", "report", "manifest"];

/// Parses a configuration. Unknown sections and keys are rejected with their
/// line number.
pub fn parse(text: &str) -> Result<LabConfig, ConfigError> {
    let mut entries: HashMap<(String, String), Entry> = HashMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split(['#', ';']).next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("unterminated section header `{s}`") })?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::Syntax { line, msg: format!("unknown section `[{name}]`") });
            }
            section = Some(name);
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected `key = value`, found `{s}`") })?;
        let sec = section
            .clone()
            .ok_or_else(|| ConfigError::Syntax { line, msg: "key outside of any section".into() })?;
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line, msg: "empty key".into() });
        }
        let prev = entries.insert(
            (sec.clone(), key.clone()),
            Entry { line, value: v.trim().to_string(), used: sec == "manifest" },
        );
        if let Some(p) = prev {
            return Err(ConfigError::Syntax { line, msg: format!("`{key}` already set on line {}", p.line) });
        }
    }

    let mut t = Table { entries };
    let mut c = LabConfig::default();

    if let Some(v) = t.get("scenario", "tech", |s| s.parse::<Tech>())? {
        c.tech = v;
    }
    if let Some(v) = t.get("scenario", "range", |s| s.parse::<Range>())? {
        c.range = v;
    }
    c.base_owd_up_ms = t.get("scenario", "base_owd_up_ms", non_negative)?;
    c.base_owd_down_ms = t.get("scenario", "base_owd_down_ms", non_negative)?;
    if let Some(v) = t.get("scenario", "jitter_std_ms", non_negative)? {
        c.jitter_std_ms = v;
    }
    if let Some(v) = t.get("scenario", "loss_prob", probability)? {
        c.loss_prob = v;
    }
    c.bandwidth_cap_mbps = t.get("scenario", "bandwidth_cap_mbps", |s| match s.to_ascii_lowercase().as_str() {
        "none" | "off" | "unlimited" => Ok(None),
        _ => positive(s).map(Some),
    })?;
    if let Some(v) = t.get("scenario", "retransmit", boolean)? {
        c.retransmit = v;
    }

    let offsets = t.get("clocks", "offset_ms", triple)?.unwrap_or(c.clocks.offsets_ms());
    let sigmas = t.get("clocks", "sigma_ms", triple)?.unwrap_or(c.clocks.sigmas_ms());
    let resync = t.get("clocks", "resync_interval_s", positive)?.unwrap_or(c.clocks.resync_interval_s());
    c.clocks = ClockModel::new(offsets, sigmas, resync)?;

    let control_on = t.get("workload", "control", boolean)?.unwrap_or(true);
    let interval = t.get("workload", "ctrl_interval_ms", positive)?.unwrap_or(100.0);
    let count = t.get("workload", "ctrl_count", |s| s.parse::<u32>().map_err(|e| e.to_string()))?.unwrap_or(100);
    c.control = control_on.then_some(ControlPings { interval_ms: interval, count });

    let video_on = t.get("workload", "video", boolean)?.unwrap_or(true);
    let duration = t.get("workload", "duration_s", positive)?.unwrap_or(10.0);
    let encoder = t.get("video", "encoder", |s| s.parse::<Encoder>())?.unwrap_or(Encoder::Mjpeg);
    let resolution = t.get("video", "resolution", |s| s.parse::<Resolution>())?.unwrap_or(Resolution::Vga);
    let mut video = VideoConfig::new(encoder, resolution);
    if let Some(v) = t.get("video", "fps", positive)? {
        video.fps = v;
    }
    video.mean_frame_bytes = t
        .get("video", "mean_frame_bytes", |s| s.parse::<u64>().map_err(|e| e.to_string()))?
        .unwrap_or(default_frame_bytes(encoder, resolution));
    if let Some(v) = t.get("video", "frame_size_cv", non_negative)? {
        video.frame_size_cv = v;
    }
    c.video = video_on.then_some(VideoWorkload { config: video, duration_s: duration });

    let bulk_on = t.get("workload", "bulk", boolean)?.unwrap_or(false);
    let bulk_duration = t.get("workload", "bulk_duration_s", positive)?.unwrap_or(duration);
    let bulk_rate = t.get("workload", "bulk_rate_mbps", positive)?.unwrap_or(BulkProbe::DEFAULT_RATE_MBPS);
    c.bulk = bulk_on.then_some(BulkProbe { duration_s: bulk_duration, rate_mbps: bulk_rate });

    let p = ProcessingModel::default();
    let tau = t.get("processing", "tau_total_ms", non_negative)?.unwrap_or(p.tau_total_ms());
    let fractions = t.get("processing", "stage_fractions", quad)?.unwrap_or(p.stage_fractions());
    let response = t
        .get("processing", "response_bytes", |s| s.parse::<u32>().map_err(|e| e.to_string()))?
        .unwrap_or(p.response_bytes());
    c.processing = ProcessingModel::new(tau, fractions, response)?;

    if let Some(v) = t.get("run", "seed", |s| s.parse::<u64>().map_err(|e| e.to_string()))? {
        c.seed = v;
    }
    c.workload_seed = t.get("run", "workload_seed", |s| s.parse::<u64>().map_err(|e| e.to_string()))?;
    if let Some(v) = t.get("run", "mss", |s| s.parse::<u32>().map_err(|e| e.to_string()))? {
        c.mss = v;
    }

    if let Some(v) = t.get("report", "reliability_bound_ms", positive)? {
        c.report.reliability_bound_ms = v;
    }
    if let Some(v) = t.get("report", "reliability_level", |s| {
        probability(s).and_then(|p| if p > 0.0 { Ok(p) } else { Err("must lie in (0, 1]".into()) })
    })? {
        c.report.reliability_level = v;
    }
    if let Some(v) = t.get("report", "distance_m", non_negative)? {
        c.report.distance_m = v;
    }
    if let Some(v) = t.get("report", "owd_down_assumed_ms", non_negative)? {
        c.report.owd_down_assumed_ms = v;
    }
    c.report.processing_fallback_ms = c.processing.tau_total_ms();

    t.reject_unused()?;
    if c.control.is_none() && c.video.is_none() && c.bulk.is_none() {
        return Err(ModelError::Config("workload enables no generator".into()).into());
    }
    if c.video.is_some() && c.bulk.is_some() {
        return Err(ModelError::Config("bulk probe and video stream are mutually exclusive".into()).into());
    }
    // the configured scenario itself must be valid, not just the sweep set
    c.resolve()?;
    Ok(c)
}

struct Table {
    entries: HashMap<(String, String), Entry>,
}

impl Table {
    fn get<T>(&mut self, sec: &str, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.entries.get_mut(&(sec.to_string(), key.to_string())) else {
            return Ok(None);
        };
        e.used = true;
        f(&e.value).map(Some).map_err(|msg| ConfigError::Value { line: e.line, key: key.to_string(), msg })
    }

    fn reject_unused(&self) -> Result<(), ConfigError> {
        let first = self.entries.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line);
        match first {
            Some(((sec, key), e)) => Err(ConfigError::Syntax { line: e.line, msg: format!("unknown key `{key}` in [{sec}]") }),
            None => Ok(()),
        }
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| if v >= 0.0 { Ok(v) } else { Err("must be >= 0".into()) })
}

fn positive(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| if v > 0.0 { Ok(v) } else { Err("must be > 0".into()) })
}

fn probability(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| if (0.0..=1.0).contains(&v) { Ok(v) } else { Err("must lie in [0, 1]".into()) })
}

fn boolean(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

fn list<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let xs = s.split(',').map(|p| number(p.trim())).collect::<Result<Vec<_>, _>>()?;
    xs.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated values, found {}", v.len()))
}

fn triple(s: &str) -> Result<[f64; 3], String> {
    list::<3>(s)
}

fn quad(s: &str) -> Result<[f64; 4], String> {
    list::<4>(s)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Invocation details recorded at the top of a manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub out_dir: String,
}

/// Renders a resolved run as a configuration file with every default
/// explicit. Parsing the result reproduces `run` and `report`.
pub fn manifest(meta: &RunManifest, run: &EmulationRun, report: &ReportConfig) -> String {
    let mut s = String::new();
    let sc = &run.scenario;
    let _ = writeln!(s, "[manifest]");
    let _ = writeln!(s, "command = {}", meta.command);
    let _ = writeln!(s, "config = {}", meta.config_path);
    let _ = writeln!(s, "out = {}", meta.out_dir);
    let _ = writeln!(s, "\n[scenario]");
    let _ = writeln!(s, "tech = {}", sc.tech().as_str());
    let _ = writeln!(s, "range = {}", sc.range().as_str());
    let _ = writeln!(s, "base_owd_up_ms = {}", sc.base_owd_up_ms);
    let _ = writeln!(s, "base_owd_down_ms = {}", sc.base_owd_down_ms);
    let _ = writeln!(s, "jitter_std_ms = {}", sc.jitter_std_ms);
    let _ = writeln!(s, "loss_prob = {}", sc.loss_prob);
    match sc.bandwidth_cap_mbps {
        Some(c) => writeln!(s, "bandwidth_cap_mbps = {c}"),
        None => writeln!(s, "bandwidth_cap_mbps = none"),
    }
    .ok();
    let _ = writeln!(s, "retransmit = {}", sc.retransmit);

    let _ = writeln!(s, "\n[clocks]");
    let _ = writeln!(s, "offset_ms = {}", join(&run.clocks.offsets_ms()));
    let _ = writeln!(s, "sigma_ms = {}", join(&run.clocks.sigmas_ms()));
    let _ = writeln!(s, "resync_interval_s = {}", run.clocks.resync_interval_s());

    let w = &run.workload;
    let _ = writeln!(s, "\n[workload]");
    let _ = writeln!(s, "control = {}", w.control.is_some());
    let ctrl = w.control.clone().unwrap_or(ControlPings { interval_ms: 100.0, count: 100 });
    let _ = writeln!(s, "ctrl_interval_ms = {}", ctrl.interval_ms);
    let _ = writeln!(s, "ctrl_count = {}", ctrl.count);
    let _ = writeln!(s, "video = {}", w.video.is_some());
    let video = w.video.clone().unwrap_or(VideoWorkload { config: VideoConfig::default(), duration_s: 10.0 });
    let _ = writeln!(s, "duration_s = {}", video.duration_s);
    let _ = writeln!(s, "bulk = {}", w.bulk.is_some());
    let bulk = w.bulk.clone().unwrap_or(BulkProbe { duration_s: video.duration_s, rate_mbps: BulkProbe::DEFAULT_RATE_MBPS });
    let _ = writeln!(s, "bulk_duration_s = {}", bulk.duration_s);
    let _ = writeln!(s, "bulk_rate_mbps = {}", bulk.rate_mbps);

    let v = &video.config;
    let _ = writeln!(s, "\n[video]");
    let _ = writeln!(s, "encoder = {}", v.encoder.as_str());
    let _ = writeln!(s, "resolution = {}", v.resolution.as_str());
    let _ = writeln!(s, "fps = {}", v.fps);
    let _ = writeln!(s, "mean_frame_bytes = {}", v.mean_frame_bytes);
    let _ = writeln!(s, "frame_size_cv = {}", v.frame_size_cv);

    let p = &run.processing;
    let _ = writeln!(s, "\n[processing]");
    let _ = writeln!(s, "tau_total_ms = {}", p.tau_total_ms());
    let _ = writeln!(s, "stage_fractions = {}", join(&p.stage_fractions()));
    let _ = writeln!(s, "response_bytes = {}", p.response_bytes());

    let _ = writeln!(s, "\n[run]");
    let _ = writeln!(s, "seed = {}", run.seed);
    let _ = writeln!(s, "workload_seed = {}", run.workload_seed.unwrap_or(run.seed));
    let _ = writeln!(s, "mss = {}", run.mss);

    let _ = writeln!(s, "\n[report]");
    let _ = writeln!(s, "reliability_bound_ms = {}", report.reliability_bound_ms);
    let _ = writeln!(s, "reliability_level = {}", report.reliability_level);
    let _ = writeln!(s, "distance_m = {}", report.distance_m);
    let _ = writeln!(s, "owd_down_assumed_ms = {}", report.owd_down_assumed_ms);
    s
}

/// Reads the scenario section of a manifest without validating the rest.
pub fn manifest_scenario(text: &str) -> Option<(Tech, Range)> {
    let mut in_scenario = false;
    let (mut tech, mut range) = (None, None);
    for raw in text.lines() {
        let s = raw.split(['#', ';']).next().unwrap_or("").trim();
        if s.starts_with('[') {
            in_scenario = s.eq_ignore_ascii_case("[scenario]");
        } else if let (true, Some((k, v))) = (in_scenario, s.split_once('=')) {
            match k.trim() {
                "tech" => tech = v.trim().parse().ok(),
                "range" => range = v.trim().parse().ok(),
                _ => {}
            }
        }
    }
    Some((tech?, range?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c, LabConfig::default());
        let run = c.resolve().unwrap();
        assert_eq!(run.scenario.base_owd_up_ms, 8.0);
        assert_eq!(run.scenario.bandwidth_cap_mbps, Some(54.6));
    }

    #[test]
    fn tech_defaults_follow_sweep() {
        let c = parse("[scenario]\njitter_std_ms = 0\n").unwrap();
        let run = c.resolve_for(Tech::FourG, Range::National, 7).unwrap();
        assert_eq!(run.scenario.base_owd_up_ms, 20.0);
        assert_eq!(run.scenario.bandwidth_cap_mbps, Some(32.2));
        assert_eq!(run.scenario.jitter_std_ms, 0.0);
        assert_eq!(run.seed, 7);
    }

    #[test]
    fn edge_with_4g_rejected() {
        let err = parse("[scenario]\ntech = FOUR_G\nrange = EDGE\n").unwrap_err();
        assert!(err.to_string().contains("EDGE"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("[scenario]\n\njitter_std_ms = abc\n").unwrap_err();
        assert!(matches!(err, ConfigError::Value { line: 3, .. }), "{err}");
        let err = parse("[scenario]\njiter = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }), "{err}");
        let err = parse("[nope]\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }), "{err}");
        let err = parse("tech = 5G\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }), "{err}");
        let err = parse("[run]\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }), "{err}");
        let err = parse("[clocks]\nsigma_ms = 1, 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Value { line: 2, .. }), "{err}");
    }

    #[test]
    fn cap_can_be_disabled() {
        let c = parse("[scenario]\nbandwidth_cap_mbps = none\n").unwrap();
        assert_eq!(c.resolve().unwrap().scenario.bandwidth_cap_mbps, None);
    }

    #[test]
    fn manifest_round_trips() {
        let text = "[scenario]\ntech = 4G\nrange = NATIONAL\nloss_prob = 0.01\nretransmit = yes\n\
                    [video]\nresolution = HD\n[workload]\nctrl_count = 7\n[run]\nseed = 42\n\
                    [report]\nreliability_bound_ms = 80\n";
        let c = parse(text).unwrap();
        let run = c.resolve().unwrap();
        let m = manifest(&RunManifest::default(), &run, &c.report);
        let again = parse(&m).unwrap();
        assert_eq!(again.resolve().unwrap(), run);
        assert_eq!(again.report, c.report);
        assert_eq!(manifest_scenario(&m), Some((Tech::FourG, Range::National)));
        // idempotent: the manifest of the manifest is itself
        assert_eq!(manifest(&RunManifest::default(), &again.resolve().unwrap(), &again.report), m);
    }

    #[test]
    fn comments_and_case() {
        let c = parse("# top\n[SCENARIO]\nTech = 5g ; inline\nrange = regional # trailing\n").unwrap();
        assert_eq!((c.tech, c.range), (Tech::FiveG, Range::Regional));
    }
}
