//! Per-frame service latency and frame one-way delay.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{CaptureRecord, Dir, FrameObservation, Tap};

use super::owd::{ClockOffsets, OwdSamples};
use super::reassembly::{reassemble, segment_frames, FrameExtent, Segmentation};
use super::rtt::{us_to_ms, AckIndex};
use super::AnalyzeError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameOwdEndpoints {
    /// Last image segment at the APP minus first image segment at the UE.
    #[default]
    FirstToLast,
    FirstToFirst,
}

impl std::str::FromStr for FrameOwdEndpoints {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "first-last" | "first-to-last" => Ok(FrameOwdEndpoints::FirstToLast),
            "first-first" | "first-to-first" => Ok(FrameOwdEndpoints::FirstToFirst),
            other => Err(format!("unknown frame OWD endpoints `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameLatency {
    pub samples_ms: Vec<f64>,
    pub frame_idx: Vec<usize>,
    /// Frames cut off by the end of the capture or missing bytes.
    pub incomplete: usize,
    /// Complete frames with no covering ACK afterwards.
    pub unacked: usize,
}

fn frames_at(records: &[CaptureRecord], flow: u32) -> Result<Segmentation, AnalyzeError> {
    Ok(segment_frames(&reassemble(records, flow, Dir::Uplink)?))
}

/// Capture position of the frame's highest-seq data segment.
fn last_index(f: &FrameExtent) -> usize {
    f.last().map_or(0, |s| s.index)
}

/// Service E2E latency per frame, UE tap only: the first ACK after the
/// frame's last image segment that covers its final byte, minus the first
/// image segment.
pub fn frame_latency(ue: &[CaptureRecord], flow: u32) -> Result<FrameLatency, AnalyzeError> {
    let seg = frames_at(ue, flow)?;
    let acks = AckIndex::new(ue, flow, Dir::Uplink);
    let mut out = FrameLatency::default();
    for f in &seg.frames {
        if !f.complete || f.segments.is_empty() {
            out.incomplete += 1;
            continue;
        }
        let first = f.first().expect("non-empty frame");
        match acks.first_covering(last_index(f), f.end_seq) {
            Some(t) => {
                out.samples_ms.push(us_to_ms(t - first.t_us));
                out.frame_idx.push(f.idx);
            }
            None => out.unacked += 1,
        }
    }
    Ok(out)
}

/// Uplink OWD per frame between the UE and APP taps, offset-corrected.
pub fn frame_owd(
    ue: &[CaptureRecord],
    app: &[CaptureRecord],
    offsets: &ClockOffsets,
    flow: u32,
    endpoints: FrameOwdEndpoints,
) -> Result<OwdSamples, AnalyzeError> {
    let sent = frames_at(ue, flow)?;
    let recv = frames_at(app, flow)?;
    let by_start: HashMap<u64, &FrameExtent> = recv.complete().map(|f| (f.start_seq, f)).collect();
    let mut out = OwdSamples::default();
    for f in sent.complete() {
        let Some(g) = by_start.get(&f.start_seq) else {
            out.unmatched += 1;
            continue;
        };
        let t_ue = f.segments.iter().map(|s| s.t_us).min().expect("non-empty");
        let t_app = match endpoints {
            FrameOwdEndpoints::FirstToLast => g.segments.iter().map(|s| s.t_us).max(),
            FrameOwdEndpoints::FirstToFirst => g.segments.iter().map(|s| s.t_us).min(),
        }
        .expect("non-empty");
        out.samples_ms
            .push((offsets.correct_us(Tap::App, t_app) - offsets.correct_us(Tap::Ue, t_ue)) / 1000.0);
    }
    Ok(out)
}

/// Timing of every frame seen at the UE, joined with the APP tap.
pub fn frame_observations(
    ue: &[CaptureRecord],
    app: &[CaptureRecord],
    offsets: &ClockOffsets,
    flow: u32,
) -> Result<Vec<FrameObservation>, AnalyzeError> {
    let sent = frames_at(ue, flow)?;
    let recv = frames_at(app, flow)?;
    let by_start: HashMap<u64, &FrameExtent> = recv.frames.iter().map(|f| (f.start_seq, f)).collect();
    let acks = AckIndex::new(ue, flow, Dir::Uplink);
    let mut out = Vec::new();
    for f in sent.frames.iter().filter(|f| !f.segments.is_empty()) {
        let ue_times = f.segments.iter().map(|s| s.t_us);
        let t_first = ue_times.clone().min().expect("non-empty");
        let t_last = ue_times.max().expect("non-empty");
        let ack = if f.complete {
            acks.first_covering(last_index(f), f.end_seq)
        } else {
            None
        };
        let g = by_start.get(&f.start_seq).filter(|g| g.complete && !g.segments.is_empty());
        let app_first = g.and_then(|g| g.segments.iter().map(|s| s.t_us).min());
        let app_last = g.and_then(|g| g.segments.iter().map(|s| s.t_us).max());
        out.push(FrameObservation {
            frame_idx: f.idx,
            byte_len: f.byte_len(),
            t_first_ue: offsets.correct_us(Tap::Ue, t_first),
            t_last_ue: offsets.correct_us(Tap::Ue, t_last),
            t_ack_ue: ack.map(|t| offsets.correct_us(Tap::Ue, t)),
            t_first_app: app_first.map(|t| offsets.correct_us(Tap::App, t)),
            t_last_app: app_last.map(|t| offsets.correct_us(Tap::App, t)),
            complete: f.complete && ack.is_some() && g.is_some(),
        });
    }
    Ok(out)
}

/// Application processing time per frame on the APP clock: emission of the
/// k-th downlink command minus arrival of the k-th completed frame.
pub fn processing_times(app: &[CaptureRecord], flow: u32) -> Result<Vec<f64>, AnalyzeError> {
    let seg = frames_at(app, flow)?;
    let mut done: Vec<(usize, i64)> = seg
        .complete()
        .map(|f| {
            let last = f.segments.iter().max_by_key(|s| s.index).expect("non-empty");
            (last.index, last.t_us)
        })
        .collect();
    done.sort_unstable();
    let commands = app
        .iter()
        .filter(|r| r.flow == flow && r.dir == Dir::Downlink && r.is_data())
        .map(|r| r.t_us);
    Ok(done.iter().zip(commands).map(|(&(_, t_frame), t_cmd)| us_to_ms(t_cmd - t_frame)).collect())
}

/// Mean image bytes per complete frame and the frame rate inferred from
/// first-segment spacing at the UE.
pub fn video_profile(ue: &[CaptureRecord], flow: u32) -> Result<Option<(f64, f64)>, AnalyzeError> {
    let seg = frames_at(ue, flow)?;
    let frames: Vec<&FrameExtent> = seg.complete().collect();
    if frames.len() < 2 {
        return Ok(None);
    }
    let mean_bytes = frames.iter().map(|f| f.byte_len() as f64).sum::<f64>() / frames.len() as f64;
    let starts: Vec<i64> = frames.iter().map(|f| f.first().expect("non-empty").t_us).collect();
    let span_s = (starts[starts.len() - 1] - starts[0]) as f64 / 1e6;
    if span_s <= 0.0 {
        return Ok(None);
    }
    let fps = (starts.len() - 1) as f64 / span_s;
    Ok(Some((mean_bytes, fps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Marker, Proto};

    struct Builder {
        ue: Vec<CaptureRecord>,
        app: Vec<CaptureRecord>,
        pid: u64,
        seq: u64,
    }

    impl Builder {
        fn new() -> Self {
            Builder {
                ue: Vec::new(),
                app: Vec::new(),
                pid: 1,
                seq: 0,
            }
        }

        fn rec(tap: Tap, pid: u64, t_us: i64, seq: u64, len: i64, marker: Marker) -> CaptureRecord {
            CaptureRecord {
                tap,
                t_us,
                flow: 2,
                dir: Dir::Uplink,
                proto: Proto::Stream,
                seq,
                ack: 0,
                payload_len: len,
                marker,
                pid,
            }
        }

        /// Sends one segment at `t_ue` arriving at `t_app`.
        fn seg(&mut self, t_ue: i64, t_app: Option<i64>, len: i64, marker: Marker) {
            self.ue.push(Self::rec(Tap::Ue, self.pid, t_ue, self.seq, len, marker));
            if let Some(t) = t_app {
                self.app.push(Self::rec(Tap::App, self.pid, t, self.seq, len, marker));
            }
            self.pid += 1;
            self.seq += len as u64;
        }

        fn ack(&mut self, t_ue: i64) {
            let mut r = Self::rec(Tap::Ue, self.pid, t_ue, 0, 0, Marker::None);
            r.dir = Dir::Downlink;
            r.ack = self.seq;
            self.ue.push(r);
            self.pid += 1;
        }
    }

    #[test]
    fn single_segment_zero_delay() {
        let mut b = Builder::new();
        b.seg(0, Some(0), 64, Marker::FrameBoundary);
        b.seg(0, Some(0), 1000, Marker::None);
        b.ack(0);
        b.seg(0, Some(0), 64, Marker::FrameBoundary);
        let lat = frame_latency(&b.ue, 2).unwrap();
        assert_eq!(lat.samples_ms, vec![0.0]);
        for ep in [FrameOwdEndpoints::FirstToLast, FrameOwdEndpoints::FirstToFirst] {
            assert_eq!(frame_owd(&b.ue, &b.app, &ClockOffsets::zero(), 2, ep).unwrap().samples_ms, vec![0.0]);
        }
    }

    #[test]
    fn single_segment_ten_ms_both_endpoint_modes() {
        let mut b = Builder::new();
        b.seg(0, Some(10_000), 64, Marker::FrameBoundary);
        b.seg(0, Some(10_000), 1000, Marker::None);
        b.seg(50_000, Some(60_000), 64, Marker::FrameBoundary);
        for ep in [FrameOwdEndpoints::FirstToLast, FrameOwdEndpoints::FirstToFirst] {
            assert_eq!(frame_owd(&b.ue, &b.app, &ClockOffsets::zero(), 2, ep).unwrap().samples_ms, vec![10.0]);
        }
    }

    #[test]
    fn endpoints_differ_by_serialization() {
        let mut b = Builder::new();
        b.seg(0, Some(10_000), 64, Marker::FrameBoundary);
        b.seg(0, Some(10_200), 1000, Marker::None);
        b.seg(0, Some(10_400), 1000, Marker::None);
        b.seg(50_000, Some(60_000), 64, Marker::FrameBoundary);
        let o = ClockOffsets::zero();
        assert_eq!(frame_owd(&b.ue, &b.app, &o, 2, FrameOwdEndpoints::FirstToLast).unwrap().samples_ms, vec![10.4]);
        assert_eq!(frame_owd(&b.ue, &b.app, &o, 2, FrameOwdEndpoints::FirstToFirst).unwrap().samples_ms, vec![10.2]);
    }

    #[test]
    fn truncated_frame_excluded() {
        let mut b = Builder::new();
        b.seg(0, Some(0), 64, Marker::FrameBoundary);
        b.seg(0, Some(0), 1000, Marker::None);
        b.ack(15_000);
        let lat = frame_latency(&b.ue, 2).unwrap();
        assert!(lat.samples_ms.is_empty());
        assert_eq!(lat.incomplete, 1);
    }

    #[test]
    fn frame_without_ack_counted() {
        let mut b = Builder::new();
        b.seg(0, Some(0), 64, Marker::FrameBoundary);
        b.seg(0, Some(0), 1000, Marker::None);
        b.seg(0, Some(0), 64, Marker::FrameBoundary);
        let lat = frame_latency(&b.ue, 2).unwrap();
        assert_eq!(lat.unacked, 1);
    }

    #[test]
    fn ack_must_cover_final_byte() {
        let mut b = Builder::new();
        b.seg(0, Some(0), 64, Marker::FrameBoundary);
        b.seg(0, Some(0), 1000, Marker::None);
        // ack of the delimiter only
        let mut partial = Builder::rec(Tap::Ue, 900, 5_000, 0, 0, Marker::None);
        partial.dir = Dir::Downlink;
        partial.ack = 64;
        b.ue.push(partial);
        b.seg(0, Some(0), 1000, Marker::None);
        b.ack(20_000);
        b.seg(0, Some(0), 64, Marker::FrameBoundary);
        assert_eq!(frame_latency(&b.ue, 2).unwrap().samples_ms, vec![20.0]);
    }

    #[test]
    fn frame_incomplete_at_app_excluded() {
        let mut b = Builder::new();
        b.seg(0, Some(10_000), 64, Marker::FrameBoundary);
        b.seg(0, None, 1000, Marker::None);
        b.seg(0, Some(10_000), 1000, Marker::None);
        b.seg(50_000, Some(60_000), 64, Marker::FrameBoundary);
        let o = frame_owd(&b.ue, &b.app, &ClockOffsets::zero(), 2, FrameOwdEndpoints::FirstToLast).unwrap();
        assert!(o.samples_ms.is_empty());
        assert_eq!(o.unmatched, 1);
    }

    #[test]
    fn processing_pairs_commands_in_order() {
        let mut b = Builder::new();
        b.seg(0, Some(10_000), 64, Marker::FrameBoundary);
        b.seg(0, Some(10_000), 1000, Marker::None);
        b.seg(50_000, Some(60_000), 64, Marker::FrameBoundary);
        b.seg(50_000, Some(60_000), 1000, Marker::None);
        b.seg(100_000, Some(110_000), 64, Marker::FrameBoundary);
        let mut cmd = Builder::rec(Tap::App, 500, 30_300, 0, 128, Marker::None);
        cmd.dir = Dir::Downlink;
        let pos = b.app.iter().position(|r| r.t_us == 60_000).unwrap();
        b.app.insert(pos, cmd.clone());
        cmd.pid = 501;
        cmd.seq = 128;
        cmd.t_us = 80_300;
        b.app.push(cmd);
        let tau = processing_times(&b.app, 2).unwrap();
        assert_eq!(tau.len(), 2);
        assert!((tau[0] - 20.3).abs() < 1e-9 && (tau[1] - 20.3).abs() < 1e-9);
    }
}
