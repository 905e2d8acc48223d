//! Traffic generators. Each returns a schedule of uplink emissions; replies,
//! acknowledgments and commands are produced by the event loop.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{Marker, VideoConfig};

/// Payload of one ping request or reply.
pub const PING_BYTES: u32 = 64;

/// Size of the multipart delimiter segment (`--Boundary` plus part headers).
pub const BOUNDARY_BYTES: u32 = 64;

/// One uplink segment to emit at `t_ns`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPlan {
    pub t_ns: i64,
    pub seq: u64,
    pub len: u32,
    pub marker: Marker,
    /// Last segment of a message; the receiver acknowledges it immediately.
    pub push: bool,
    pub frame: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FramePlan {
    pub idx: u32,
    pub t_ns: i64,
    pub bytes: u64,
    /// Byte range of the image payload, excluding the delimiter.
    pub data_start: u64,
    pub data_end: u64,
    pub segments: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamSchedule {
    pub frames: Vec<FramePlan>,
    pub segments: Vec<SegmentPlan>,
}

fn ms_to_ns(ms: f64) -> i64 {
    (ms * 1e6).round() as i64
}

/// Emission times of `count` ping requests spaced `interval_ms` apart.
pub fn gen_control_pings(interval_ms: f64, count: u32) -> Vec<i64> {
    (0..count).map(|k| ms_to_ns(k as f64 * interval_ms)).collect()
}

/// Frame size drawn from a lognormal with the configured mean and
/// coefficient of variation.
pub fn draw_frame_bytes<R: Rng + ?Sized>(cfg: &VideoConfig, rng: &mut R) -> u64 {
    let mean = cfg.mean_frame_bytes as f64;
    let var = (1.0 + cfg.frame_size_cv * cfg.frame_size_cv).ln();
    let mu = mean.ln() - var / 2.0;
    let z: f64 = StandardNormal.sample(rng);
    (mu + var.sqrt() * z).exp().round().max(1.0) as u64
}

/// One frame every `1/fps` seconds for `duration_s`, each preceded by a
/// boundary segment, plus a closing boundary at the end of the stream.
pub fn gen_video_stream<R: Rng + ?Sized>(
    cfg: &VideoConfig,
    duration_s: f64,
    mss: u32,
    rng: &mut R,
) -> StreamSchedule {
    let n_frames = (duration_s * cfg.fps + 1e-9).floor() as u32;
    let mut sched = StreamSchedule::default();
    let mut cursor = 0u64;
    let boundary = |t_ns, seq| SegmentPlan {
        t_ns,
        seq,
        len: BOUNDARY_BYTES,
        marker: Marker::FrameBoundary,
        push: false,
        frame: None,
    };

    for idx in 0..n_frames {
        let t_ns = ms_to_ns(idx as f64 * 1000.0 / cfg.fps);
        let bytes = draw_frame_bytes(cfg, rng);
        sched.segments.push(boundary(t_ns, cursor));
        cursor += BOUNDARY_BYTES as u64;
        let data_start = cursor;
        let mut remaining = bytes;
        let mut segments = 0;
        while remaining > 0 {
            let len = remaining.min(mss as u64) as u32;
            remaining -= len as u64;
            sched.segments.push(SegmentPlan {
                t_ns,
                seq: cursor,
                len,
                marker: Marker::None,
                push: remaining == 0,
                frame: Some(idx),
            });
            cursor += len as u64;
            segments += 1;
        }
        sched.frames.push(FramePlan {
            idx,
            t_ns,
            bytes,
            data_start,
            data_end: cursor,
            segments,
        });
    }
    if n_frames > 0 {
        let mut close = boundary(ms_to_ns(duration_s * 1000.0), cursor);
        close.push = true;
        sched.segments.push(close);
    }
    sched
}

/// Back-to-back full-size segments at `rate_mbps` for `duration_s`.
pub fn gen_bulk_probe(duration_s: f64, rate_mbps: f64, mss: u32) -> StreamSchedule {
    let spacing_ns = mss as f64 * 8.0 * 1000.0 / rate_mbps;
    let end_ns = duration_s * 1e9;
    let mut sched = StreamSchedule::default();
    let mut k = 0u64;
    loop {
        let t = k as f64 * spacing_ns;
        if t >= end_ns {
            break;
        }
        sched.segments.push(SegmentPlan {
            t_ns: t.round() as i64,
            seq: k * mss as u64,
            len: mss,
            marker: Marker::None,
            push: false,
            frame: None,
        });
        k += 1;
    }
    if let Some(last) = sched.segments.last_mut() {
        last.push = true;
    }
    sched
}
