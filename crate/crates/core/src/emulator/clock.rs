//! Node clocks and the periodic NTP offset trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{ClockModel, Tap};

/// One NTP offset measurement on one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NtpSample {
    pub node: Tap,
    pub t_s: f64,
    pub offset_ms: f64,
}

const CLOCK_STREAM_BASE: u64 = 16;

/// Offset samples for every node at `t = k * resync_interval` for
/// `k = 0..=floor(duration / resync_interval)`.
///
/// Each sample is the node's true offset plus zero-mean Gaussian noise with
/// that node's sigma. Every node draws from its own stream so a longer trace
/// extends a shorter one without changing its prefix.
pub fn sample_ntp_trace(clocks: &ClockModel, duration_s: f64, seed: u64) -> Vec<NtpSample> {
    let interval = clocks.resync_interval_s();
    let count = (duration_s / interval + 1e-9).floor().max(0.0) as u64 + 1;
    let mut out = Vec::with_capacity(count as usize * 3);
    for node in Tap::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(CLOCK_STREAM_BASE + node.index() as u64);
        let theta = clocks.offset_ms(node);
        let sigma = clocks.sigma_ms(node);
        for k in 0..count {
            let z: f64 = StandardNormal.sample(&mut rng);
            out.push(NtpSample {
                node,
                t_s: k as f64 * interval,
                offset_ms: theta + sigma * z,
            });
        }
    }
    out
}

/// Piecewise-constant clock error per node: the offset measured at the most
/// recent resync stays in effect until the next one.
pub(crate) struct NodeClocks {
    interval_ns: i64,
    offsets_ns: [Vec<i64>; 3],
}

impl NodeClocks {
    pub(crate) fn from_trace(clocks: &ClockModel, trace: &[NtpSample]) -> Self {
        let mut offsets_ns: [Vec<i64>; 3] = Default::default();
        for s in trace {
            offsets_ns[s.node.index()].push((s.offset_ms * 1e6).round() as i64);
        }
        NodeClocks {
            interval_ns: (clocks.resync_interval_s() * 1e9).round() as i64,
            offsets_ns,
        }
    }

    pub(crate) fn local_ns(&self, node: Tap, true_ns: i64) -> i64 {
        let series = &self.offsets_ns[node.index()];
        let k = (true_ns.max(0) / self.interval_ns) as usize;
        true_ns + series[k.min(series.len() - 1)]
    }
}
