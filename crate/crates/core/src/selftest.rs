//! Built-in oracle battery: each check compares a library result against an
//! independently derived reference value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analyzer::{analyze, srtt, AnalyzerConfig, Captures};
use crate::emulator::{self, ControlPings, EmulationRun, VideoWorkload, Workload, DEFAULT_MSS};
use crate::kpis::{e2e_srt, latency_at, propagate_error, velocity};
use crate::model::{ClockModel, ProcessingModel, Range, Scenario, Tech, VideoConfig};

/// Reference smoothing of `[10, 20, 20, 40, 10, 10, 10, 10, 10, 10]` with
/// gain 1/8, worked out by hand in exact binary fractions.
pub const SRTT_FIXTURE: [f64; 10] = [10.0, 20.0, 20.0, 40.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0];
pub const SRTT_REFERENCE: [f64; 10] = [
    10.0,
    11.25,
    12.34375,
    15.80078125,
    15.07568359375,
    14.44122314453125,
    13.886070251464844,
    13.400311470031738,
    12.975272536277771,
    12.60336346924305,
];

/// Service response times (ms) obtained by inverting each reference maximum
/// velocity with a 1 m displacement, and the velocities themselves.
pub const VELOCITY_TABLE: [(&str, f64, f64); 5] = [
    ("5G-EDGE", 89.31, 40.31),
    ("5G-REGIONAL", 91.30, 39.43),
    ("5G-NATIONAL", 95.49, 37.70),
    ("4G-REGIONAL", 102.30, 35.19),
    ("4G-NATIONAL", 104.32, 34.51),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    /// SRTT gain under test; the reference is fixed at 1/8.
    pub alpha: f64,
    /// Randomized sample sets for the percentile oracle.
    pub percentile_sets: usize,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions { alpha: 0.125, percentile_sets: 50, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

pub fn run(opts: &SelftestOptions) -> SelftestReport {
    let checks = vec![
        check_error_propagation(),
        check_srt(),
        check_velocity(),
        check_srtt(opts.alpha),
        check_percentile(opts.percentile_sets, opts.seed),
        check_delay_recovery(),
    ];
    SelftestReport { checks }
}

fn check_error_propagation() -> Check {
    let p = propagate_error(0.387, 0.317, 0.117).expect("valid sigmas");
    let hand = (0.387f64 * 0.387 + 0.317 * 0.317 + 0.117 * 0.117).sqrt();
    let ok = (p.quadrature_ms - hand).abs() < 1e-12
        && (p.quadrature_ms - 0.5138).abs() <= 0.0005
        && (p.linear_sum_ms - 0.821).abs() < 1e-12;
    Check::new(
        "error propagation",
        ok,
        format!("quadrature {:.4} ms, linear sum {:.3} ms", p.quadrature_ms, p.linear_sum_ms),
    )
}

fn check_srt() -> Check {
    let v = e2e_srt(61.7, 20.3, 5.0);
    Check::new("service response time", v == 87.0, format!("61.7 + 20.3 + 5 = {v} ms"))
}

fn check_velocity() -> Check {
    let mut worst = 0.0f64;
    let mut worst_inverse = 0.0f64;
    for (_, srt, kmh) in VELOCITY_TABLE {
        let v = velocity(1.0, srt).expect("srt > 0");
        worst = worst.max((v - kmh).abs());
        // 1 m at kmh km/h takes 3.6 / kmh seconds
        worst_inverse = worst_inverse.max((3.6 / kmh * 1000.0 - srt).abs());
    }
    Check::new(
        "velocity round trip",
        worst <= 0.01 && worst_inverse <= 0.01,
        format!("worst deviation {worst:.4} km/h, inversion {worst_inverse:.4} ms"),
    )
}

fn check_srtt(alpha: f64) -> Check {
    let got = srtt(&SRTT_FIXTURE, alpha);
    let worst = got
        .iter()
        .zip(SRTT_REFERENCE)
        .map(|(g, r)| (g - r).abs())
        .fold(0.0, f64::max);
    Check::new("srtt recurrence", worst <= 1e-9, format!("alpha {alpha}, worst deviation {worst:.3e} ms"))
}

fn check_percentile(sets: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..sets {
        let n: usize = rng.gen_range(1..400);
        let xs: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 200.0).round() / 4.0).collect();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        // ceil(0.95 n) in integers
        let k = (95 * n).div_ceil(100);
        if latency_at(&xs, 0.95).ok() != Some(sorted[k - 1]) {
            bad += 1;
        }
    }
    Check::new("percentile order statistic", bad == 0, format!("{bad} of {sets} sample sets disagree"))
}

fn check_delay_recovery() -> Check {
    let mut scenario = Scenario::new(Tech::FiveG, Range::Edge).expect("valid scenario");
    scenario.base_owd_up_ms = 10.0;
    scenario.base_owd_down_ms = 5.0;
    scenario.jitter_std_ms = 0.0;
    scenario.bandwidth_cap_mbps = None;
    let run = EmulationRun {
        scenario,
        workload: Workload {
            control: Some(ControlPings { interval_ms: 50.0, count: 20 }),
            video: Some(VideoWorkload { config: VideoConfig::default(), duration_s: 1.0 }),
            bulk: None,
        },
        clocks: ClockModel::perfect(),
        processing: ProcessingModel::default(),
        seed: 1,
        workload_seed: None,
        mss: DEFAULT_MSS,
    };
    let result = emulator::run(&run).map_err(|e| e.to_string()).and_then(|set| {
        let captures = Captures { ue: set.ue, core: set.core, app: set.app, ntp: Some(set.ntp) };
        analyze(&captures, &AnalyzerConfig::default()).map_err(|e| e.to_string())
    });
    let a = match result {
        Ok(a) => a,
        Err(e) => return Check::new("delay recovery", false, e),
    };
    let dev = |xs: &[f64], target: f64| xs.iter().map(|x| (x - target).abs()).fold(0.0, f64::max);
    let rtt = dev(&a.ctrl_rtt.samples_ms, 15.0);
    let owd = dev(&a.owd_packet.samples_ms, 10.0);
    let ok = !a.ctrl_rtt.samples_ms.is_empty() && !a.owd_packet.samples_ms.is_empty() && rtt <= 1e-3 && owd <= 1e-3;
    Check::new(
        "delay recovery",
        ok,
        format!(
            "{} RTT samples off 15 ms by <= {rtt:.4} ms, {} OWD samples off 10 ms by <= {owd:.4} ms",
            a.ctrl_rtt.samples_ms.len(),
            a.owd_packet.samples_ms.len()
        ),
    )
}
