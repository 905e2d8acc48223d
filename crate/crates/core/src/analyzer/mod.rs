//! Flow reconstruction and raw latency extraction from capture files.
//!
//! The analyzer sees only what a packet capture would: the three tap files
//! and the NTP offset trace. It never reads the emulator's ground truth.

mod frames;
mod owd;
mod reassembly;
mod rtt;

use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frames::{frame_latency, frame_observations, frame_owd, processing_times, video_profile, FrameLatency, FrameOwdEndpoints};
pub use owd::{
    delivery_counts, estimate_offsets, owd_control, owd_downlink, owd_packet, ClockOffsets, MatchMode, OffsetEstimate,
    OwdSamples,
};
pub use reassembly::{reassemble, segment_frames, FrameExtent, Segment, Segmentation, StreamView};
pub use rtt::{check_alpha, rtt_control, rtt_tcp, srtt, RttSamples};

use crate::emulator::{NtpSample, BULK_FLOW, NTP_FILE, VIDEO_FLOW};
use crate::model::{read_tap, CaptureRecord, Dir, ModelError, Tap};

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("malformed capture: {0}")]
    Malformed(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing capture file {0}")]
    MissingFile(String),
    #[error("{file}: {source}")]
    Capture {
        file: String,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    /// SRTT gain.
    pub alpha: f64,
    pub match_mode: MatchMode,
    pub frame_owd_endpoints: FrameOwdEndpoints,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            alpha: 0.125,
            match_mode: MatchMode::Pid,
            frame_owd_endpoints: FrameOwdEndpoints::FirstToLast,
        }
    }
}

/// What the analyzer consumes: UE, core and APP tap captures plus the
/// optional NTP trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Captures {
    pub ue: Vec<CaptureRecord>,
    pub core: Vec<CaptureRecord>,
    pub app: Vec<CaptureRecord>,
    pub ntp: Option<Vec<NtpSample>>,
}

impl Captures {
    /// Loads and validates `ue.ndjson`, `core.ndjson`, `app.ndjson` and,
    /// when present, `ntp.ndjson` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, AnalyzeError> {
        let mut taps: [Vec<CaptureRecord>; 3] = Default::default();
        for tap in Tap::ALL {
            let path = dir.join(tap.file_name());
            if !path.is_file() {
                return Err(AnalyzeError::MissingFile(path.display().to_string()));
            }
            let reader = BufReader::new(fs::File::open(&path)?);
            taps[tap.index()] = read_tap(reader, tap).map_err(|source| AnalyzeError::Capture {
                file: tap.file_name().to_string(),
                source,
            })?;
        }
        let ntp_path = dir.join(NTP_FILE);
        let ntp = if ntp_path.is_file() {
            let text = fs::read_to_string(&ntp_path)?;
            let mut samples = Vec::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let s = serde_json::from_str(line).map_err(|e| AnalyzeError::Capture {
                    file: NTP_FILE.to_string(),
                    source: ModelError::Parse { line: i + 1, source: e },
                })?;
                samples.push(s);
            }
            Some(samples)
        } else {
            None
        };
        let [ue, core, app] = taps;
        Ok(Captures { ue, core, app, ntp })
    }
}

/// Raw samples extracted from one capture set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Analysis {
    pub offsets: ClockOffsets,
    pub ctrl_rtt: RttSamples,
    pub tcp_rtt: RttSamples,
    pub frame_latency: FrameLatency,
    pub owd_ctrl: OwdSamples,
    pub owd_packet: OwdSamples,
    pub owd_frame: OwdSamples,
    pub owd_down: OwdSamples,
    pub processing_ms: Vec<f64>,
    pub sent: u64,
    pub delivered: u64,
    /// Mean frame bytes and inferred fps of the video stream.
    pub video_profile: Option<(f64, f64)>,
    /// Delivered rate of the bulk probe at the APP tap after warm-up, Mbit/s.
    pub bulk_goodput_mbps: Option<f64>,
    pub alpha: f64,
    pub warnings: Vec<String>,
}

/// Warm-up excluded from goodput measurements.
pub const GOODPUT_WARMUP_S: f64 = 0.5;

/// Delivered payload rate of `flow` at `records`' tap, excluding the first
/// `warmup_s` seconds after the first delivery. Mbit/s.
pub fn goodput_mbps(records: &[CaptureRecord], flow: u32, warmup_s: f64) -> Option<f64> {
    let data: Vec<&CaptureRecord> = records.iter().filter(|r| r.flow == flow && r.is_data()).collect();
    let start = data.first()?.t_us + (warmup_s * 1e6).round() as i64;
    let end = data.iter().map(|r| r.t_us).max()?;
    if end <= start {
        return None;
    }
    // bytes that finished arriving strictly after the window opened
    let bytes: i64 = data.iter().filter(|r| r.t_us > start).map(|r| r.payload_len).sum();
    Some(bytes as f64 * 8.0 / (end - start) as f64)
}

/// Runs every extraction on one capture set.
pub fn analyze(captures: &Captures, cfg: &AnalyzerConfig) -> Result<Analysis, AnalyzeError> {
    check_alpha(cfg.alpha)?;
    let mut warnings = Vec::new();
    let offsets = match &captures.ntp {
        Some(trace) => estimate_offsets(trace)?,
        None => {
            warnings.push("no NTP trace; clock offsets assumed zero".to_string());
            ClockOffsets::zero()
        }
    };
    let (ue, app) = (&captures.ue, &captures.app);
    let has_video = ue.iter().any(|r| r.flow == VIDEO_FLOW && r.dir == Dir::Uplink && r.is_data());
    let stream_flow = if has_video { VIDEO_FLOW } else { BULK_FLOW };

    let (sent, delivered) = delivery_counts(ue, app);
    let mut analysis = Analysis {
        ctrl_rtt: rtt_control(ue),
        tcp_rtt: rtt_tcp(ue, stream_flow),
        owd_ctrl: owd_control(ue, app, &offsets),
        owd_packet: owd_packet(ue, app, &offsets, cfg.match_mode),
        sent,
        delivered,
        alpha: cfg.alpha,
        ..Default::default()
    };
    if has_video {
        analysis.frame_latency = frame_latency(ue, VIDEO_FLOW)?;
        analysis.owd_frame = frame_owd(ue, app, &offsets, VIDEO_FLOW, cfg.frame_owd_endpoints)?;
        analysis.owd_down = owd_downlink(ue, app, &offsets, VIDEO_FLOW);
        analysis.processing_ms = processing_times(app, VIDEO_FLOW)?;
        analysis.video_profile = video_profile(ue, VIDEO_FLOW)?;
        let seg = segment_frames(&reassemble(ue, VIDEO_FLOW, Dir::Uplink)?);
        warnings.extend(seg.warnings);
    }
    analysis.bulk_goodput_mbps = goodput_mbps(app, BULK_FLOW, GOODPUT_WARMUP_S);
    analysis.offsets = offsets;
    analysis.warnings = warnings;
    Ok(analysis)
}

/// Sample classes written to `samples.ndjson`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleClass {
    CtrlRtt,
    CtrlSrtt,
    TcpRtt,
    TcpSrtt,
    FrameLatency,
    FrameSrtt,
    OwdCtrl,
    OwdPacket,
    OwdFrame,
    OwdDown,
    Processing,
}

impl SampleClass {
    pub const ALL: [SampleClass; 11] = [
        SampleClass::CtrlRtt,
        SampleClass::CtrlSrtt,
        SampleClass::TcpRtt,
        SampleClass::TcpSrtt,
        SampleClass::FrameLatency,
        SampleClass::FrameSrtt,
        SampleClass::OwdCtrl,
        SampleClass::OwdPacket,
        SampleClass::OwdFrame,
        SampleClass::OwdDown,
        SampleClass::Processing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SampleClass::CtrlRtt => "ctrl_rtt",
            SampleClass::CtrlSrtt => "ctrl_srtt",
            SampleClass::TcpRtt => "tcp_rtt",
            SampleClass::TcpSrtt => "tcp_srtt",
            SampleClass::FrameLatency => "frame_latency",
            SampleClass::FrameSrtt => "frame_srtt",
            SampleClass::OwdCtrl => "owd_ctrl",
            SampleClass::OwdPacket => "owd_packet",
            SampleClass::OwdFrame => "owd_frame",
            SampleClass::OwdDown => "owd_down",
            SampleClass::Processing => "processing",
        }
    }
}

impl std::str::FromStr for SampleClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SampleClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown sample class `{s}`"))
    }
}

/// One line of `samples.ndjson`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub class: SampleClass,
    pub idx: usize,
    pub value_ms: f64,
}

impl Analysis {
    pub fn samples(&self, class: SampleClass) -> Vec<f64> {
        match class {
            SampleClass::CtrlRtt => self.ctrl_rtt.samples_ms.clone(),
            SampleClass::CtrlSrtt => srtt(&self.ctrl_rtt.samples_ms, self.alpha),
            SampleClass::TcpRtt => self.tcp_rtt.samples_ms.clone(),
            SampleClass::TcpSrtt => srtt(&self.tcp_rtt.samples_ms, self.alpha),
            SampleClass::FrameLatency => self.frame_latency.samples_ms.clone(),
            SampleClass::FrameSrtt => srtt(&self.frame_latency.samples_ms, self.alpha),
            SampleClass::OwdCtrl => self.owd_ctrl.samples_ms.clone(),
            SampleClass::OwdPacket => self.owd_packet.samples_ms.clone(),
            SampleClass::OwdFrame => self.owd_frame.samples_ms.clone(),
            SampleClass::OwdDown => self.owd_down.samples_ms.clone(),
            SampleClass::Processing => self.processing_ms.clone(),
        }
    }

    pub fn sample_records(&self) -> Vec<SampleRecord> {
        SampleClass::ALL
            .into_iter()
            .flat_map(|class| {
                self.samples(class)
                    .into_iter()
                    .enumerate()
                    .map(move |(idx, value_ms)| SampleRecord { class, idx, value_ms })
            })
            .collect()
    }
}

/// Reads `samples.ndjson` back.
pub fn read_samples(text: &str) -> Result<Vec<SampleRecord>, AnalyzeError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AnalyzeError::Malformed(format!("samples line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Marker, Proto};

    #[test]
    fn goodput_after_warmup() {
        // 1250 B every 100 us = 100 Mbit/s
        let recs: Vec<CaptureRecord> = (0..20_000)
            .map(|k| CaptureRecord {
                tap: Tap::App,
                t_us: k * 100,
                flow: BULK_FLOW,
                dir: Dir::Uplink,
                proto: Proto::Stream,
                seq: k as u64 * 1250,
                ack: 0,
                payload_len: 1250,
                marker: Marker::None,
                pid: k as u64 + 1,
            })
            .collect();
        let g = goodput_mbps(&recs, BULK_FLOW, 0.5).unwrap();
        assert!((g - 100.0).abs() < 0.01, "{g}");
        assert!(goodput_mbps(&recs, 9, 0.5).is_none());
    }

    #[test]
    fn sample_class_names_round_trip() {
        for c in SampleClass::ALL {
            assert_eq!(c.as_str().parse::<SampleClass>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
    }
}
