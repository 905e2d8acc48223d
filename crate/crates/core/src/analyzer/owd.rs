//! Clock-offset estimation and multi-point one-way delay.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::emulator::NtpSample;
use crate::model::{CaptureRecord, Dir, Proto, Tap};

use super::AnalyzeError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OffsetEstimate {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub samples: usize,
}

/// Per-node offset estimates, indexed by [`Tap::index`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClockOffsets {
    pub nodes: [OffsetEstimate; 3],
}

impl ClockOffsets {
    /// No correction; used when no NTP trace accompanies the captures.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Offsets known exactly, no spread.
    pub fn exact(offsets_ms: [f64; 3]) -> Self {
        ClockOffsets {
            nodes: offsets_ms.map(|m| OffsetEstimate {
                mean_ms: m,
                std_ms: 0.0,
                samples: 0,
            }),
        }
    }

    pub fn get(&self, node: Tap) -> &OffsetEstimate {
        &self.nodes[node.index()]
    }

    pub fn sigmas_ms(&self) -> [f64; 3] {
        self.nodes.map(|n| n.std_ms)
    }

    /// Subtracts the node's estimated offset from a local timestamp, in µs.
    pub fn correct_us(&self, node: Tap, t_us: i64) -> f64 {
        t_us as f64 - self.get(node).mean_ms * 1000.0
    }
}

/// Batch estimate over the whole trace: sample mean and sample standard
/// deviation per node.
pub fn estimate_offsets(trace: &[NtpSample]) -> Result<ClockOffsets, AnalyzeError> {
    let mut out = ClockOffsets::default();
    for node in Tap::ALL {
        let xs: Vec<f64> = trace.iter().filter(|s| s.node == node).map(|s| s.offset_ms).collect();
        if xs.len() < 2 {
            return Err(AnalyzeError::InsufficientData(format!(
                "{} NTP samples for node {node}, need at least 2",
                xs.len()
            )));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        out.nodes[node.index()] = OffsetEstimate {
            mean_ms: mean,
            std_ms: var.sqrt(),
            samples: xs.len(),
        };
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Exact packet identity carried across taps.
    #[default]
    Pid,
    /// `(flow, seq, len)`, first occurrence on each side.
    Seq,
}

impl std::str::FromStr for MatchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pid" | "by_pid" => Ok(MatchMode::Pid),
            "seq" | "by_seq" => Ok(MatchMode::Seq),
            other => Err(format!("unknown match mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OwdSamples {
    pub samples_ms: Vec<f64>,
    pub unmatched: usize,
}

fn owd_ms(offsets: &ClockOffsets, from: Tap, t_from: i64, to: Tap, t_to: i64) -> f64 {
    (offsets.correct_us(to, t_to) - offsets.correct_us(from, t_from)) / 1000.0
}

/// Uplink OWD of every STREAM data segment seen at the UE:
/// `(t_app - offset_app) - (t_ue - offset_ue)`.
pub fn owd_packet(
    ue: &[CaptureRecord],
    app: &[CaptureRecord],
    offsets: &ClockOffsets,
    mode: MatchMode,
) -> OwdSamples {
    let sent = ue.iter().filter(|r| r.dir == Dir::Uplink && r.is_data());
    let mut out = OwdSamples::default();
    match mode {
        MatchMode::Pid => {
            let arrived: HashMap<u64, i64> = app
                .iter()
                .filter(|r| r.dir == Dir::Uplink && r.is_data())
                .map(|r| (r.pid, r.t_us))
                .collect();
            for r in sent {
                match arrived.get(&r.pid) {
                    Some(&t) => out.samples_ms.push(owd_ms(offsets, Tap::Ue, r.t_us, Tap::App, t)),
                    None => out.unmatched += 1,
                }
            }
        }
        MatchMode::Seq => {
            let mut arrived: HashMap<(u32, u64, i64), i64> = HashMap::new();
            for r in app.iter().filter(|r| r.dir == Dir::Uplink && r.is_data()) {
                arrived.entry((r.flow, r.seq, r.payload_len)).or_insert(r.t_us);
            }
            let mut used = std::collections::HashSet::new();
            for r in sent {
                let key = (r.flow, r.seq, r.payload_len);
                if !used.insert(key) {
                    continue;
                }
                match arrived.get(&key) {
                    Some(&t) => out.samples_ms.push(owd_ms(offsets, Tap::Ue, r.t_us, Tap::App, t)),
                    None => out.unmatched += 1,
                }
            }
        }
    }
    out
}

/// Uplink OWD of control requests, matched by pid.
pub fn owd_control(ue: &[CaptureRecord], app: &[CaptureRecord], offsets: &ClockOffsets) -> OwdSamples {
    directed_owd(ue, app, offsets, Dir::Uplink, |r| r.proto == Proto::Ctrl)
}

/// Downlink OWD of the command packets on `flow` (APP -> UE), matched by pid.
pub fn owd_downlink(ue: &[CaptureRecord], app: &[CaptureRecord], offsets: &ClockOffsets, flow: u32) -> OwdSamples {
    directed_owd(ue, app, offsets, Dir::Downlink, |r| r.flow == flow && r.is_data())
}

fn directed_owd(
    ue: &[CaptureRecord],
    app: &[CaptureRecord],
    offsets: &ClockOffsets,
    dir: Dir,
    keep: impl Fn(&CaptureRecord) -> bool,
) -> OwdSamples {
    let (src, src_tap, dst, dst_tap) = match dir {
        Dir::Uplink => (ue, Tap::Ue, app, Tap::App),
        Dir::Downlink => (app, Tap::App, ue, Tap::Ue),
    };
    let arrived: HashMap<u64, i64> = dst
        .iter()
        .filter(|r| r.dir == dir && keep(r))
        .map(|r| (r.pid, r.t_us))
        .collect();
    let mut out = OwdSamples::default();
    for r in src.iter().filter(|r| r.dir == dir && keep(r)) {
        match arrived.get(&r.pid) {
            Some(&t) => out.samples_ms.push(owd_ms(offsets, src_tap, r.t_us, dst_tap, t)),
            None => out.unmatched += 1,
        }
    }
    out
}

/// Packets sent at their origin tap and how many of them reached the
/// destination tap, both directions.
pub fn delivery_counts(ue: &[CaptureRecord], app: &[CaptureRecord]) -> (u64, u64) {
    let at_app: std::collections::HashSet<u64> = app.iter().map(|r| r.pid).collect();
    let at_ue: std::collections::HashSet<u64> = ue.iter().map(|r| r.pid).collect();
    let mut sent = 0;
    let mut delivered = 0;
    for r in ue.iter().filter(|r| r.dir == Dir::Uplink) {
        sent += 1;
        delivered += at_app.contains(&r.pid) as u64;
    }
    for r in app.iter().filter(|r| r.dir == Dir::Downlink) {
        sent += 1;
        delivered += at_ue.contains(&r.pid) as u64;
    }
    (sent, delivered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Marker;

    fn rec(tap: Tap, pid: u64, t_us: i64, seq: u64) -> CaptureRecord {
        CaptureRecord {
            tap,
            t_us,
            flow: 2,
            dir: Dir::Uplink,
            proto: Proto::Stream,
            seq,
            ack: 0,
            payload_len: 1000,
            marker: Marker::None,
            pid,
        }
    }

    fn trace(node_values: [&[f64]; 3]) -> Vec<NtpSample> {
        let mut out = Vec::new();
        for node in Tap::ALL {
            for (k, v) in node_values[node.index()].iter().enumerate() {
                out.push(NtpSample {
                    node,
                    t_s: k as f64 * 10.0,
                    offset_ms: *v,
                });
            }
        }
        out
    }

    #[test]
    fn zero_trace() {
        let est = estimate_offsets(&trace([&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]])).unwrap();
        for n in est.nodes {
            assert_eq!((n.mean_ms, n.std_ms), (0.0, 0.0));
        }
    }

    #[test]
    fn two_point_std() {
        let est = estimate_offsets(&trace([&[4.0, 6.0], &[0.0, 0.0], &[0.0, 0.0]])).unwrap();
        let ue = est.get(Tap::Ue);
        assert_eq!(ue.mean_ms, 5.0);
        assert!((ue.std_ms - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            estimate_offsets(&trace([&[1.0], &[0.0, 0.0], &[0.0, 0.0]])),
            Err(AnalyzeError::InsufficientData(_))
        ));
    }

    #[test]
    fn perfect_clocks_ten_ms() {
        let ue = [rec(Tap::Ue, 1, 0, 0)];
        let app = [rec(Tap::App, 1, 10_000, 0)];
        let o = owd_packet(&ue, &app, &ClockOffsets::zero(), MatchMode::Pid);
        assert_eq!(o.samples_ms, vec![10.0]);
    }

    #[test]
    fn known_offset_cancels() {
        let ue = [rec(Tap::Ue, 1, 0, 0)];
        let app = [rec(Tap::App, 1, 15_000, 0)];
        let offsets = ClockOffsets::exact([0.0, 0.0, 5.0]);
        for mode in [MatchMode::Pid, MatchMode::Seq] {
            assert_eq!(owd_packet(&ue, &app, &offsets, mode).samples_ms, vec![10.0]);
        }
    }

    #[test]
    fn seq_matching_uses_first_occurrence() {
        // original lost, retransmission delivered: pid matching sees one loss,
        // seq matching pairs the original send with the retransmitted arrival
        let ue = [rec(Tap::Ue, 1, 0, 0), rec(Tap::Ue, 2, 30_000, 0)];
        let app = [rec(Tap::App, 2, 40_000, 0)];
        let by_pid = owd_packet(&ue, &app, &ClockOffsets::zero(), MatchMode::Pid);
        assert_eq!((by_pid.samples_ms.clone(), by_pid.unmatched), (vec![10.0], 1));
        let by_seq = owd_packet(&ue, &app, &ClockOffsets::zero(), MatchMode::Seq);
        assert_eq!(by_seq.samples_ms, vec![40.0]);
    }

    #[test]
    fn unmatched_counted() {
        let ue = [rec(Tap::Ue, 1, 0, 0), rec(Tap::Ue, 2, 0, 1000)];
        let app = [rec(Tap::App, 1, 10_000, 0)];
        let o = owd_packet(&ue, &app, &ClockOffsets::zero(), MatchMode::Pid);
        assert_eq!(o.unmatched, 1);
        assert_eq!(delivery_counts(&ue, &app), (2, 1));
    }
}
