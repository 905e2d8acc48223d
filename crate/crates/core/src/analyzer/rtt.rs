//! Round-trip samples measured on the UE tap alone.

use std::collections::{HashMap, HashSet};

use crate::model::{CaptureRecord, Dir, Proto, REPLY_PID_FLAG};
use crate::Scalar;

use super::AnalyzeError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RttSamples {
    pub samples_ms: Vec<f64>,
    /// Requests or segments that never saw a reply or covering ACK.
    pub unmatched: usize,
    /// Segments skipped because they were retransmitted.
    pub retransmitted: usize,
}

pub(crate) fn us_to_ms(us: i64) -> f64 {
    us as f64 / 1000.0
}

/// Ping RTT: reply minus request timestamp on the UE clock. Both stamps come
/// from the same clock, so offsets cancel.
pub fn rtt_control(ue: &[CaptureRecord]) -> RttSamples {
    let replies: HashMap<u64, i64> = ue
        .iter()
        .filter(|r| r.proto == Proto::Ctrl && r.dir == Dir::Downlink && r.pid & REPLY_PID_FLAG != 0)
        .map(|r| (r.pid & !REPLY_PID_FLAG, r.t_us))
        .collect();
    let mut out = RttSamples::default();
    for req in ue.iter().filter(|r| r.proto == Proto::Ctrl && r.dir == Dir::Uplink) {
        match replies.get(&req.pid) {
            Some(t) => out.samples_ms.push(us_to_ms(t - req.t_us)),
            None => out.unmatched += 1,
        }
    }
    out
}

/// Max segment tree answering "first position >= lo whose value >= x".
pub(crate) struct MaxTree {
    len: usize,
    size: usize,
    tree: Vec<u64>,
}

impl MaxTree {
    pub(crate) fn new(values: &[u64]) -> Self {
        let size = values.len().next_power_of_two().max(1);
        let mut tree = vec![0; 2 * size];
        tree[size..size + values.len()].copy_from_slice(values);
        for i in (1..size).rev() {
            tree[i] = tree[2 * i].max(tree[2 * i + 1]);
        }
        MaxTree { len: values.len(), size, tree }
    }

    pub(crate) fn first_at_least(&self, lo: usize, x: u64) -> Option<usize> {
        self.search(1, 0, self.size, lo, x).filter(|&i| i < self.len)
    }

    fn search(&self, node: usize, l: usize, r: usize, lo: usize, x: u64) -> Option<usize> {
        if r <= lo || self.tree[node] < x {
            return None;
        }
        if r - l == 1 {
            return Some(l);
        }
        let mid = (l + r) / 2;
        self.search(2 * node, l, mid, lo, x)
            .or_else(|| self.search(2 * node + 1, mid, r, lo, x))
    }
}

/// Downlink acknowledgments of an uplink flow, in capture order.
pub(crate) struct AckIndex {
    positions: Vec<usize>,
    times: Vec<i64>,
    tree: MaxTree,
}

impl AckIndex {
    pub(crate) fn new(records: &[CaptureRecord], flow: u32, data_dir: Dir) -> Self {
        let acks: Vec<(usize, &CaptureRecord)> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.flow == flow && r.dir == data_dir.reverse() && r.is_ack())
            .collect();
        let values: Vec<u64> = acks.iter().map(|(_, r)| r.ack).collect();
        AckIndex {
            positions: acks.iter().map(|(i, _)| *i).collect(),
            times: acks.iter().map(|(_, r)| r.t_us).collect(),
            tree: MaxTree::new(&values),
        }
    }

    /// Timestamp of the first ACK captured after record `after` that covers
    /// byte offset `end`.
    pub(crate) fn first_covering(&self, after: usize, end: u64) -> Option<i64> {
        let lo = self.positions.partition_point(|&p| p <= after);
        self.tree.first_at_least(lo, end).map(|j| self.times[j])
    }
}

/// Per-segment TCP RTT: first ACK covering the segment minus the segment's
/// own timestamp. Retransmitted segments are skipped (Karn's rule).
pub fn rtt_tcp(ue: &[CaptureRecord], flow: u32) -> RttSamples {
    let data: Vec<(usize, &CaptureRecord)> = ue
        .iter()
        .enumerate()
        .filter(|(_, r)| r.flow == flow && r.dir == Dir::Uplink && r.is_data())
        .collect();
    let mut seen = HashSet::new();
    let mut retransmitted = HashSet::new();
    for (_, r) in &data {
        if !seen.insert((r.seq, r.payload_len)) {
            retransmitted.insert((r.seq, r.payload_len));
        }
    }
    let acks = AckIndex::new(ue, flow, Dir::Uplink);

    let mut out = RttSamples::default();
    for (i, r) in data {
        if retransmitted.contains(&(r.seq, r.payload_len)) {
            out.retransmitted += 1;
            continue;
        }
        match acks.first_covering(i, r.seq_end()) {
            Some(t) => out.samples_ms.push(us_to_ms(t - r.t_us)),
            None => out.unmatched += 1,
        }
    }
    out
}

/// Exponentially smoothed RTT: the first sample seeds the series, then
/// `s_k = (1 - alpha) * s_{k-1} + alpha * r_k`.
pub fn srtt<T: Scalar>(samples: &[T], alpha: T) -> Vec<T> {
    let mut out = Vec::with_capacity(samples.len());
    let mut iter = samples.iter();
    let Some(&first) = iter.next() else {
        return out;
    };
    let mut s = first;
    out.push(s);
    for &r in iter {
        s = (T::one() - alpha) * s + alpha * r;
        out.push(s);
    }
    out
}

/// Checks the SRTT gain lies strictly inside (0, 1).
pub fn check_alpha(alpha: f64) -> Result<(), AnalyzeError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(AnalyzeError::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}
