//! Deterministic discrete-event emulation of the UE -> core -> app server
//! testbed with three capture taps.
//!
//! Path layout, per direction:
//!
//! ```text
//!   UE --access link--> CORE --core link--> APP      (uplink)
//!   UE <--access link-- CORE <--core link-- APP      (downlink)
//! ```
//!
//! The access links carry the technology's base one-way delay, jitter, loss
//! and the bandwidth cap (an unbounded FIFO queue in front of a serializer).
//! The core links carry the range-dependent added delay only.

mod clock;
mod sim;
mod traffic;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use clock::{sample_ntp_trace, NtpSample};
pub use traffic::{
    draw_frame_bytes, gen_bulk_probe, gen_control_pings, gen_video_stream, FramePlan, SegmentPlan,
    StreamSchedule, BOUNDARY_BYTES, PING_BYTES,
};

use crate::model::{write_ndjson, CaptureRecord, ClockModel, Dir, ModelError, ProcessingModel, Proto, Scenario, Tap, VideoConfig};

pub const CTRL_FLOW: u32 = 1;
pub const VIDEO_FLOW: u32 = 2;
pub const BULK_FLOW: u32 = 3;

pub const DEFAULT_MSS: u32 = 1400;

/// Delayed-ACK flush timer.
pub const DELAYED_ACK_MS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPings {
    pub interval_ms: f64,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoWorkload {
    pub config: VideoConfig,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkProbe {
    pub duration_s: f64,
    /// Generator rate, Mbit/s.
    pub rate_mbps: f64,
}

impl BulkProbe {
    pub const DEFAULT_RATE_MBPS: f64 = 100.0;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub control: Option<ControlPings>,
    pub video: Option<VideoWorkload>,
    pub bulk: Option<BulkProbe>,
}

impl Workload {
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.control.is_none() && self.video.is_none() && self.bulk.is_none() {
            return bad("workload enables no generator");
        }
        if self.video.is_some() && self.bulk.is_some() {
            return bad("bulk probe and video stream are mutually exclusive");
        }
        if let Some(c) = &self.control {
            if c.count == 0 {
                return bad("control ping count must be >= 1");
            }
            if !(c.interval_ms > 0.0) {
                return bad("control ping interval must be > 0");
            }
        }
        if let Some(v) = &self.video {
            v.config.check()?;
            if !(v.duration_s > 0.0) {
                return bad("video duration must be > 0");
            }
        }
        if let Some(b) = &self.bulk {
            if !(b.duration_s > 0.0) {
                return bad("bulk probe duration must be > 0");
            }
            if !(b.rate_mbps > 0.0) {
                return bad("bulk probe rate must be > 0");
            }
        }
        Ok(())
    }
}

/// Everything needed to reproduce one emulation bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulationRun {
    pub scenario: Scenario,
    pub workload: Workload,
    pub clocks: ClockModel,
    pub processing: ProcessingModel,
    pub seed: u64,
    /// Seed for the video frame sizes; `seed` when unset. Sharing it keeps
    /// the same video content across scenarios that differ in `seed`.
    #[serde(default)]
    pub workload_seed: Option<u64>,
    pub mss: u32,
}

impl EmulationRun {
    pub fn check(&self) -> Result<(), ModelError> {
        self.scenario.check()?;
        self.workload.check()?;
        if self.mss == 0 {
            return Err(ModelError::Config("mss must be > 0".into()));
        }
        Ok(())
    }
}

/// True timing of one packet. Times are nanoseconds on the reference clock.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketTruth {
    pub pid: u64,
    pub flow: u32,
    pub dir: Dir,
    pub proto: Proto,
    pub len: u32,
    pub retransmission: bool,
    pub t_emit_ns: i64,
    pub t_core_ns: Option<i64>,
    /// Arrival at the destination endpoint; `None` when lost.
    pub t_arrive_ns: Option<i64>,
}

impl PacketTruth {
    pub fn owd_ms(&self) -> Option<f64> {
        self.t_arrive_ns.map(|t| (t - self.t_emit_ns) as f64 / 1e6)
    }
}

/// True timing of one video frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame_idx: u32,
    pub bytes: u64,
    /// Emission of the first image segment at the UE.
    pub t_first_emit_ns: i64,
    /// Arrival of the last missing image byte at the app server.
    pub t_complete_ns: Option<i64>,
    pub owd_ms: Option<f64>,
    /// Emission of the downlink command produced for this frame.
    pub t_command_ns: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TruthEntry {
    Packet(PacketTruth),
    Frame(FrameTruth),
}

/// Ground truth for test oracles. Never consumed by the analyzer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruthLog {
    pub packets: Vec<PacketTruth>,
    pub frames: Vec<FrameTruth>,
}

impl TruthLog {
    pub fn packet(&self, pid: u64) -> Option<&PacketTruth> {
        self.packets
            .binary_search_by_key(&pid, |p| p.pid)
            .ok()
            .map(|i| &self.packets[i])
    }

    pub fn entries(&self) -> Vec<TruthEntry> {
        self.packets
            .iter()
            .cloned()
            .map(TruthEntry::Packet)
            .chain(self.frames.iter().cloned().map(TruthEntry::Frame))
            .collect()
    }
}

/// The three tap captures, the NTP trace and the ground truth of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CaptureSet {
    pub ue: Vec<CaptureRecord>,
    pub core: Vec<CaptureRecord>,
    pub app: Vec<CaptureRecord>,
    pub ntp: Vec<NtpSample>,
    pub truth: TruthLog,
}

pub const NTP_FILE: &str = "ntp.ndjson";
pub const TRUTH_FILE: &str = "truth.ndjson";

impl CaptureSet {
    pub fn tap(&self, tap: Tap) -> &[CaptureRecord] {
        match tap {
            Tap::Ue => &self.ue,
            Tap::Core => &self.core,
            Tap::App => &self.app,
        }
    }

    /// Writes `ue.ndjson`, `core.ndjson`, `app.ndjson`, `ntp.ndjson` and
    /// `truth.ndjson` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for tap in Tap::ALL {
            let f = BufWriter::new(fs::File::create(dir.join(tap.file_name()))?);
            write_ndjson(f, self.tap(tap))?;
        }
        write_ndjson(BufWriter::new(fs::File::create(dir.join(NTP_FILE))?), &self.ntp)?;
        let mut f = BufWriter::new(fs::File::create(dir.join(TRUTH_FILE))?);
        write_ndjson(&mut f, &self.truth.entries())?;
        f.flush()
    }
}

/// Runs one emulation. Identical inputs give bit-identical outputs.
pub fn run(run: &EmulationRun) -> Result<CaptureSet, ModelError> {
    run.check()?;
    Ok(sim::Sim::new(run).execute())
}
