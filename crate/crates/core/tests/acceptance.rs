//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgelab_core::analyzer::{analyze, srtt, AnalyzerConfig, Captures, SampleClass};
use edgelab_core::config::{self, LabConfig};
use edgelab_core::emulator::{self, ControlPings, EmulationRun, VideoWorkload, Workload, DEFAULT_MSS};
use edgelab_core::kpis::{availability, demanded_throughput, e2e_srt, latency_at, propagate_error, velocity, Verdict};
use edgelab_core::model::{ClockModel, Encoder, ProcessingModel, Range, Resolution, Scenario, Tech, VideoConfig};
use edgelab_core::{selftest, sweep};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn captures(set: &emulator::CaptureSet) -> Captures {
    Captures { ue: set.ue.clone(), core: set.core.clone(), app: set.app.clone(), ntp: Some(set.ntp.clone()) }
}

fn base_run(scenario: Scenario, workload: Workload) -> EmulationRun {
    EmulationRun {
        scenario,
        workload,
        clocks: ClockModel::perfect(),
        processing: ProcessingModel::default(),
        seed: 2024,
        workload_seed: None,
        mss: DEFAULT_MSS,
    }
}

fn c1_error_propagation() -> Outcome {
    let p = propagate_error(0.387f64, 0.317, 0.117).map_err(|e| e.to_string())?;
    ensure(
        (p.quadrature_ms - 0.5138).abs() <= 0.0005 && (p.linear_sum_ms - 0.821).abs() <= 1e-9,
        format!("quadrature {:.5} ms, linear sum {:.5} ms", p.quadrature_ms, p.linear_sum_ms),
    )
}

fn c2_service_response_time() -> Outcome {
    let v = e2e_srt(61.7f64, 20.3, 5.0);
    ensure(v == 87.0, format!("e2e_srt(61.7, 20.3, 5) = {v}"))
}

fn c3_velocity() -> Outcome {
    let table = [(89.31, 40.31), (91.30, 39.43), (95.49, 37.70), (102.30, 35.19), (104.32, 34.51)];
    let mut worst = 0.0f64;
    let mut got = Vec::new();
    for (srt, kmh) in table {
        // the response time is the reference velocity inverted: t = 3.6 / v
        let inverted_ms = (3.6 / kmh * 1000.0 * 100.0f64).round() / 100.0;
        if inverted_ms != srt {
            return Err(format!("inversion of {kmh} km/h gives {inverted_ms} ms, not {srt}"));
        }
        let v = velocity(1.0f64, srt).map_err(|e| e.to_string())?;
        worst = worst.max((v - kmh).abs());
        got.push(format!("{v:.2}"));
    }
    ensure(worst <= 0.01, format!("[{}] km/h, worst deviation {worst:.4}", got.join(", ")))
}

fn c4_srtt() -> Outcome {
    let fixture = [10.0f64, 20.0, 20.0, 40.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0];
    // independent oracle: exact rational recurrence S_k = (7 S_{k-1} + R_k) / 8
    // carried as integers scaled by 8^9
    let scale = 8i128.pow(9);
    let mut s = 10 * scale;
    let mut oracle = vec![10.0];
    for &r in &fixture[1..] {
        s = (7 * s + r as i128 * scale) / 8;
        oracle.push(s as f64 / scale as f64);
    }
    let got = srtt(&fixture, 0.125);
    let worst = got.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(got.len() == 10 && worst <= 1e-9, format!("worst deviation {worst:.2e} ms, final {:.9}", got[9]))
}

fn c5_delay_recovery() -> Outcome {
    let mut sc = Scenario::new(Tech::FiveG, Range::Edge).map_err(|e| e.to_string())?;
    sc.base_owd_up_ms = 10.0;
    sc.base_owd_down_ms = 5.0;
    sc.jitter_std_ms = 0.0;
    sc.bandwidth_cap_mbps = None;
    let workload = Workload {
        control: Some(ControlPings { interval_ms: 10.0, count: 200 }),
        video: Some(VideoWorkload { config: VideoConfig::default(), duration_s: 2.0 }),
        bulk: None,
    };
    let mut run = base_run(sc, workload);
    let a = analyze(&captures(&emulator::run(&run).map_err(|e| e.to_string())?), &AnalyzerConfig::default())
        .map_err(|e| e.to_string())?;
    let dev = |xs: &[f64], t: f64| xs.iter().map(|x| (x - t).abs()).fold(0.0, f64::max);
    let rtt_dev = dev(&a.ctrl_rtt.samples_ms, 15.0);
    let owd_dev = dev(&a.owd_packet.samples_ms, 10.0);
    if a.ctrl_rtt.samples_ms.is_empty() || a.owd_packet.samples_ms.is_empty() || rtt_dev > 1e-3 || owd_dev > 1e-3 {
        return Err(format!("RTT off by {rtt_dev} ms, OWD off by {owd_dev} ms"));
    }

    run.clocks = ClockModel::default();
    let a = analyze(&captures(&emulator::run(&run).map_err(|e| e.to_string())?), &AnalyzerConfig::default())
        .map_err(|e| e.to_string())?;
    let n = a.owd_packet.samples_ms.len();
    let mean = a.owd_packet.samples_ms.iter().sum::<f64>() / n as f64;
    let bound = 3.0 * propagate_error(0.387f64, 0.317, 0.117).unwrap().quadrature_ms;
    ensure(
        n >= 1000 && (mean - 10.0).abs() <= bound,
        format!(
            "{} RTT and OWD samples exact within 1 us; with clock noise {n} packets, mean OWD {mean:.3} ms (bound {bound:.3})",
            a.ctrl_rtt.samples_ms.len()
        ),
    )
}

fn c6_monotonicity(outcomes: &[sweep::ScenarioOutcome]) -> Outcome {
    // round-trip latency classes; one direction carries half of each step
    let classes = [SampleClass::CtrlRtt, SampleClass::TcpRtt, SampleClass::FrameLatency];
    let median = |o: &sweep::ScenarioOutcome, c: SampleClass| {
        sweep::medians(&o.analysis).into_iter().find(|(k, _)| *k == c).and_then(|(_, m)| m)
    };
    let by_label = |label: &str| outcomes.iter().find(|o| o.report.label.scenario == label).expect("scenario ran");
    let steps = [("5G-EDGE", "5G-REGIONAL"), ("5G-REGIONAL", "5G-NATIONAL"), ("4G-REGIONAL", "4G-NATIONAL")];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for c in classes {
        for (a, b) in steps {
            let (ma, mb) = (median(by_label(a), c).ok_or("missing class")?, median(by_label(b), c).ok_or("missing class")?);
            let per_dir = (mb - ma) / 2.0;
            worst = worst.max((per_dir - 2.0).abs());
            if (per_dir - 2.0).abs() > 0.2 {
                lines.push(format!("{} {a}->{b}: {per_dir:.3} ms/direction", c.as_str()));
            }
        }
        let five: Vec<f64> = outcomes.iter().filter(|o| o.report.label.tech == "5G").filter_map(|o| median(o, c)).collect();
        let four: Vec<f64> = outcomes.iter().filter(|o| o.report.label.tech == "4G").filter_map(|o| median(o, c)).collect();
        let max5 = five.iter().cloned().fold(f64::MIN, f64::max);
        let min4 = four.iter().cloned().fold(f64::MAX, f64::min);
        if five.len() != 3 || four.len() != 2 || max5 >= min4 {
            lines.push(format!("{}: slowest 5G {max5:.3} ms vs fastest 4G {min4:.3} ms", c.as_str()));
        }
    }
    if lines.is_empty() {
        Ok(format!("worst per-direction step deviation {worst:.3} ms; every 5G median below every 4G median"))
    } else {
        Err(lines.join("; "))
    }
}

fn c7_frames_and_availability() -> Outcome {
    let mut sc = Scenario::new(Tech::FiveG, Range::Edge).map_err(|e| e.to_string())?;
    sc.jitter_std_ms = 0.0;
    let run = base_run(
        sc.clone(),
        Workload { video: Some(VideoWorkload { config: VideoConfig::default(), duration_s: 1.0 }), ..Default::default() },
    );
    let a = analyze(&captures(&emulator::run(&run).map_err(|e| e.to_string())?), &AnalyzerConfig::default())
        .map_err(|e| e.to_string())?;
    let frames = a.frame_latency.samples_ms.len();
    let full = availability::<f64>(a.sent, a.delivered).map_err(|e| e.to_string())?;

    sc.loss_prob = 0.01;
    sc.bandwidth_cap_mbps = None;
    let run = base_run(sc, Workload { control: Some(ControlPings { interval_ms: 1.0, count: 10_000 }), ..Default::default() });
    let a = analyze(&captures(&emulator::run(&run).map_err(|e| e.to_string())?), &AnalyzerConfig::default())
        .map_err(|e| e.to_string())?;
    let lossy = availability::<f64>(a.sent, a.delivered).map_err(|e| e.to_string())?;
    ensure(
        frames == 20 && full == 100.0 && (lossy - 99.0).abs() <= 0.5 && a.sent >= 10_000,
        format!("{frames} frames; availability {full} % lossless, {lossy:.2} % over {} packets at 1 % loss", a.sent),
    )
}

fn c8_percentile() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for set in 0..50 {
        let n = rng.gen_range(1..500usize);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..250.0)).collect();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (95 * n).div_ceil(100);
        let got = latency_at(&xs, 0.95).map_err(|e| e.to_string())?;
        if got != sorted[k - 1] {
            return Err(format!("set {set} (n = {n}): {got} vs order statistic {}", sorted[k - 1]));
        }
    }
    Ok("50 randomized sets agree with the sorted order statistic".into())
}

fn c9_throughput() -> Outcome {
    let demand = |r| demanded_throughput(&VideoConfig::new(Encoder::Mjpeg, r));
    let (vga, d1, hd) = (demand(Resolution::Vga), demand(Resolution::D1), demand(Resolution::Hd));
    let verdicts_ok = vga.demand_mbps < 32.2
        && d1.demand_mbps > 32.2
        && hd.demand_mbps > 32.2
        && vga.verdict(Tech::FourG) == Some(Verdict::Fits)
        && d1.verdict(Tech::FourG) == Some(Verdict::Exceeds)
        && hd.verdict(Tech::FourG) == Some(Verdict::Exceeds);

    let mut cfg = LabConfig::default();
    cfg.tech = Tech::FourG;
    cfg.range = Range::Regional;
    cfg.video = Some(VideoWorkload { config: VideoConfig::new(Encoder::Mjpeg, Resolution::Hd), duration_s: 3.0 });
    let run = cfg.resolve().map_err(|e| e.to_string())?;
    let set = emulator::run(&run).map_err(|e| e.to_string())?;
    let a = analyze(&captures(&set), &AnalyzerConfig::default()).map_err(|e| e.to_string())?;
    let owd = &a.owd_frame.samples_ms;
    let growing = owd.len() >= 50 && owd.windows(2).all(|w| w[1] > w[0]);
    ensure(
        verdicts_ok && growing,
        format!(
            "demand VGA {:.1}, D1 {:.1}, HD {:.1} Mbit/s; HD over 4G frame OWD {:.1} -> {:.1} ms over {} frames, strictly increasing: {growing}",
            vga.demand_mbps,
            d1.demand_mbps,
            hd.demand_mbps,
            owd.first().copied().unwrap_or(f64::NAN),
            owd.last().copied().unwrap_or(f64::NAN),
            owd.len()
        ),
    )
}

fn c10_determinism(elapsed_s: f64) -> Outcome {
    let cfg = config::parse("[scenario]\ntech = 4G\nrange = NATIONAL\nloss_prob = 0.01\n[workload]\nduration_s = 2\n")
        .map_err(|e| e.to_string())?;
    let run = cfg.resolve().map_err(|e| e.to_string())?;
    let tmp = std::env::temp_dir().join(format!("edgelab-acceptance-{}", std::process::id()));
    let (a, b) = (tmp.join("a"), tmp.join("b"));
    emulator::run(&run).map_err(|e| e.to_string())?.write_dir(&a).map_err(|e| e.to_string())?;
    emulator::run(&run).map_err(|e| e.to_string())?.write_dir(&b).map_err(|e| e.to_string())?;
    let mut same = true;
    for f in ["ue.ndjson", "core.ndjson", "app.ndjson", emulator::NTP_FILE, emulator::TRUTH_FILE] {
        let (x, y) = (std::fs::read(a.join(f)).map_err(|e| e.to_string())?, std::fs::read(b.join(f)).map_err(|e| e.to_string())?);
        same &= !x.is_empty() && x == y;
    }
    let _ = std::fs::remove_dir_all(&tmp);
    ensure(
        same && elapsed_s < 60.0,
        format!("byte-identical outputs: {same}; selftest + sweep took {elapsed_s:.1} s"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "error propagation", c1_error_propagation()),
        (2, "E2E service response time", c2_service_response_time()),
        (3, "velocity table", c3_velocity()),
        (4, "SRTT recurrence", c4_srtt()),
        (5, "delay recovery", c5_delay_recovery()),
    ];

    let start = Instant::now();
    let st = selftest::run(&selftest::SelftestOptions::default());
    let mut cfg = LabConfig::default();
    cfg.jitter_std_ms = 0.0;
    let outcomes = sweep::run_sweep(&cfg, &AnalyzerConfig::default());
    let elapsed = start.elapsed().as_secs_f64();
    results.push((
        6,
        "scenario monotonicity",
        match &outcomes {
            Ok(o) if o.len() == 5 => c6_monotonicity(o),
            Ok(o) => Err(format!("{} scenarios", o.len())),
            Err(e) => Err(e.to_string()),
        },
    ));
    results.push((7, "frame accounting and availability", c7_frames_and_availability()));
    results.push((8, "reliability percentile", c8_percentile()));
    results.push((9, "throughput verdicts and queue growth", c9_throughput()));
    let c10 = if st.passed() {
        c10_determinism(elapsed)
    } else {
        Err(format!("selftest failed {} checks", st.failures()))
    };
    results.push((10, "determinism and runtime", c10));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("PASS  {n:>2} {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {n:>2} {name}: {d}")
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
