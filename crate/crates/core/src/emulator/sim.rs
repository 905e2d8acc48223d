use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::clock::{sample_ntp_trace, NodeClocks};
use super::traffic::{gen_bulk_probe, gen_control_pings, gen_video_stream, FramePlan, StreamSchedule, PING_BYTES};
use super::{
    CaptureSet, EmulationRun, FrameTruth, PacketTruth, TruthLog, BULK_FLOW, CTRL_FLOW, DELAYED_ACK_MS, VIDEO_FLOW,
};
use crate::model::{CaptureRecord, Dir, Marker, Proto, Tap, REPLY_PID_FLAG};

const FRAME_SIZE_STREAM: u64 = 1;
const UPLINK_STREAM: u64 = 2;
const DOWNLINK_STREAM: u64 = 3;

/// Retransmission timeout used before the sender has an RTT sample.
const INITIAL_RTO_NS: i64 = 1_000_000_000;
const SRTT_GAIN: f64 = 1.0 / 8.0;

#[derive(Clone, Debug)]
struct Packet {
    pid: u64,
    flow: u32,
    dir: Dir,
    proto: Proto,
    seq: u64,
    ack: u64,
    len: u32,
    marker: Marker,
    push: bool,
    frame: Option<u32>,
    retransmission: bool,
    emit_ns: i64,
}

impl Packet {
    fn is_data(&self) -> bool {
        self.proto == Proto::Stream && self.len > 0
    }

    fn seq_end(&self) -> u64 {
        self.seq + self.len as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LinkId {
    AccessUp,
    CoreUp,
    CoreDown,
    AccessDown,
}

impl LinkId {
    fn index(self) -> usize {
        self as usize
    }
}

enum Event {
    Emit(Packet),
    Arrive(Tap, Packet),
    AckTimer { flow: u32, dir: Dir, generation: u64 },
    ProcessDone { frame: u32 },
}

struct Scheduled {
    t: i64,
    order: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.order == other.order
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // min-heap on (t, order)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.t, other.order).cmp(&(self.t, self.order))
    }
}

struct Link {
    delay_ns: f64,
    jitter_ns: f64,
    loss: f64,
    /// Bits per nanosecond; `None` means no serialization delay.
    rate: Option<f64>,
    busy_until: f64,
    last_arrival: i64,
    rng: Option<ChaCha8Rng>,
}

impl Link {
    fn new(delay_ms: f64, jitter_ms: f64, loss: f64, cap_mbps: Option<f64>, rng: Option<ChaCha8Rng>) -> Self {
        Link {
            delay_ns: delay_ms * 1e6,
            jitter_ns: jitter_ms * 1e6,
            loss,
            rate: cap_mbps.map(|c| c / 1000.0),
            busy_until: 0.0,
            last_arrival: i64::MIN,
            rng,
        }
    }

    /// Arrival time at the far end, or `None` when the packet is dropped.
    fn transmit(&mut self, now: i64, len: u32) -> Option<i64> {
        if self.loss > 0.0 {
            let rng = self.rng.as_mut().expect("lossy link has an rng");
            if rng.gen::<f64>() < self.loss {
                return None;
            }
        }
        let start = self.busy_until.max(now as f64);
        let done = match self.rate {
            Some(rate) => start + len as f64 * 8.0 / rate,
            None => start,
        };
        self.busy_until = done;
        let mut delay = self.delay_ns;
        if self.jitter_ns > 0.0 {
            let rng = self.rng.as_mut().expect("jittered link has an rng");
            let z: f64 = StandardNormal.sample(rng);
            delay = (delay + self.jitter_ns * z).max(0.0);
        }
        // FIFO: no overtaking on a single path
        let arrival = ((done + delay).round() as i64).max(self.last_arrival);
        self.last_arrival = arrival;
        Some(arrival)
    }
}

#[derive(Default)]
struct Sender {
    snd_nxt: u64,
    srtt_ns: Option<f64>,
    // (seq_end, first send time, retransmitted)
    outstanding: VecDeque<(u64, i64, bool)>,
}

impl Sender {
    fn on_send(&mut self, pkt: &Packet) {
        self.snd_nxt = self.snd_nxt.max(pkt.seq_end());
        if pkt.retransmission {
            let end = pkt.seq_end();
            if let Some(e) = self.outstanding.iter_mut().find(|e| e.0 == end) {
                e.2 = true;
            }
        } else {
            self.outstanding.push_back((pkt.seq_end(), pkt.emit_ns, false));
        }
    }

    fn on_ack(&mut self, now: i64, ack: u64) {
        let mut sample = None;
        while let Some(&(end, sent, retx)) = self.outstanding.front() {
            if end > ack {
                break;
            }
            self.outstanding.pop_front();
            if !retx {
                sample = Some((now - sent) as f64);
            }
        }
        if let Some(r) = sample {
            self.srtt_ns = Some(match self.srtt_ns {
                None => r,
                Some(s) => (1.0 - SRTT_GAIN) * s + SRTT_GAIN * r,
            });
        }
    }

    fn rto_ns(&self) -> i64 {
        self.srtt_ns.map_or(INITIAL_RTO_NS, |s| s.round() as i64)
    }
}

#[derive(Default)]
struct Receiver {
    rcv_nxt: u64,
    // out-of-order ranges, start -> end
    pending: BTreeMap<u64, u64>,
    unacked: u32,
    timer_generation: u64,
    timer_armed: bool,
}

impl Receiver {
    fn accept(&mut self, seq: u64, end: u64, contiguous: bool) {
        if !contiguous {
            self.rcv_nxt = self.rcv_nxt.max(end);
            return;
        }
        if seq <= self.rcv_nxt {
            self.rcv_nxt = self.rcv_nxt.max(end);
        } else {
            let e = self.pending.entry(seq).or_insert(end);
            *e = (*e).max(end);
        }
        while let Some((&s, &e)) = self.pending.iter().next() {
            if s > self.rcv_nxt {
                break;
            }
            self.pending.remove(&s);
            self.rcv_nxt = self.rcv_nxt.max(e);
        }
    }
}

struct FrameState {
    plan: FramePlan,
    received: u64,
    first_emit_ns: Option<i64>,
    complete_ns: Option<i64>,
    command_ns: Option<i64>,
}

struct Observation {
    tap: Tap,
    t_ns: i64,
    pkt: Packet,
}

pub(crate) struct Sim<'a> {
    run: &'a EmulationRun,
    now: i64,
    queue: BinaryHeap<Scheduled>,
    order: u64,
    next_pid: u64,
    links: [Link; 4],
    observations: Vec<Observation>,
    truth: BTreeMap<u64, PacketTruth>,
    senders: BTreeMap<(u32, Dir), Sender>,
    receivers: BTreeMap<(u32, Dir), Receiver>,
    frames: Vec<FrameState>,
    processing_free_ns: i64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<'a> Sim<'a> {
    pub(crate) fn new(run: &'a EmulationRun) -> Self {
        let sc = &run.scenario;
        let added = sc.added_owd_ms();
        let links = [
            Link::new(
                sc.base_owd_up_ms,
                sc.jitter_std_ms,
                sc.loss_prob,
                sc.bandwidth_cap_mbps,
                Some(stream_rng(run.seed, UPLINK_STREAM)),
            ),
            Link::new(added, 0.0, 0.0, None, None),
            Link::new(added, 0.0, 0.0, None, None),
            Link::new(
                sc.base_owd_down_ms,
                sc.jitter_std_ms,
                sc.loss_prob,
                sc.bandwidth_cap_mbps,
                Some(stream_rng(run.seed, DOWNLINK_STREAM)),
            ),
        ];
        Sim {
            run,
            now: 0,
            queue: BinaryHeap::new(),
            order: 0,
            next_pid: 1,
            links,
            observations: Vec::new(),
            truth: BTreeMap::new(),
            senders: BTreeMap::new(),
            receivers: BTreeMap::new(),
            frames: Vec::new(),
            processing_free_ns: 0,
        }
    }

    fn schedule(&mut self, t: i64, event: Event) {
        self.order += 1;
        self.queue.push(Scheduled {
            t,
            order: self.order,
            event,
        });
    }

    fn schedule_stream(&mut self, flow: u32, sched: &StreamSchedule) {
        for s in &sched.segments {
            let pkt = Packet {
                pid: 0,
                flow,
                dir: Dir::Uplink,
                proto: Proto::Stream,
                seq: s.seq,
                ack: 0,
                len: s.len,
                marker: s.marker,
                push: s.push,
                frame: s.frame,
                retransmission: false,
                emit_ns: 0,
            };
            self.schedule(s.t_ns, Event::Emit(pkt));
        }
    }

    pub(crate) fn execute(mut self) -> CaptureSet {
        let run = self.run;
        let wl = &run.workload;
        if let Some(c) = &wl.control {
            for t in gen_control_pings(c.interval_ms, c.count) {
                let pkt = Packet {
                    pid: 0,
                    flow: CTRL_FLOW,
                    dir: Dir::Uplink,
                    proto: Proto::Ctrl,
                    seq: 0,
                    ack: 0,
                    len: PING_BYTES,
                    marker: Marker::None,
                    push: false,
                    frame: None,
                    retransmission: false,
                    emit_ns: 0,
                };
                self.schedule(t, Event::Emit(pkt));
            }
        }
        if let Some(v) = &wl.video {
            let mut rng = stream_rng(run.workload_seed.unwrap_or(run.seed), FRAME_SIZE_STREAM);
            let sched = gen_video_stream(&v.config, v.duration_s, run.mss, &mut rng);
            self.schedule_stream(VIDEO_FLOW, &sched);
            self.frames = sched
                .frames
                .into_iter()
                .map(|plan| FrameState {
                    plan,
                    received: 0,
                    first_emit_ns: None,
                    complete_ns: None,
                    command_ns: None,
                })
                .collect();
        }
        if let Some(b) = &wl.bulk {
            let sched = gen_bulk_probe(b.duration_s, b.rate_mbps, run.mss);
            self.schedule_stream(BULK_FLOW, &sched);
        }

        while let Some(Scheduled { t, event, .. }) = self.queue.pop() {
            self.now = t;
            match event {
                Event::Emit(pkt) => self.emit(pkt),
                Event::Arrive(node, pkt) => self.arrive(node, pkt),
                Event::AckTimer { flow, dir, generation } => self.ack_timer(flow, dir, generation),
                Event::ProcessDone { frame } => self.process_done(frame),
            }
        }
        self.finish()
    }

    fn observe(&mut self, tap: Tap, pkt: &Packet) {
        self.observations.push(Observation {
            tap,
            t_ns: self.now,
            pkt: pkt.clone(),
        });
    }

    fn emit(&mut self, mut pkt: Packet) {
        if pkt.pid == 0 {
            pkt.pid = self.next_pid;
            self.next_pid += 1;
        }
        pkt.emit_ns = self.now;
        let origin = pkt.dir.origin();
        self.observe(origin, &pkt);
        self.truth.insert(
            pkt.pid,
            PacketTruth {
                pid: pkt.pid,
                flow: pkt.flow,
                dir: pkt.dir,
                proto: pkt.proto,
                len: pkt.len,
                retransmission: pkt.retransmission,
                t_emit_ns: self.now,
                t_core_ns: None,
                t_arrive_ns: None,
            },
        );
        if pkt.is_data() {
            self.senders.entry((pkt.flow, pkt.dir)).or_default().on_send(&pkt);
            if let (Some(f), Dir::Uplink, false) = (pkt.frame, pkt.dir, pkt.retransmission) {
                let state = &mut self.frames[f as usize];
                if state.first_emit_ns.is_none() {
                    state.first_emit_ns = Some(self.now);
                }
            }
        }
        let link = match pkt.dir {
            Dir::Uplink => LinkId::AccessUp,
            Dir::Downlink => LinkId::CoreDown,
        };
        self.send(link, pkt);
    }

    fn send(&mut self, link: LinkId, pkt: Packet) {
        match self.links[link.index()].transmit(self.now, pkt.len) {
            Some(arrival) => {
                let next = match link {
                    LinkId::AccessUp | LinkId::CoreDown => Tap::Core,
                    LinkId::CoreUp => Tap::App,
                    LinkId::AccessDown => Tap::Ue,
                };
                self.schedule(arrival, Event::Arrive(next, pkt));
            }
            None => {
                if self.run.scenario.retransmit && pkt.is_data() {
                    let rto = self.senders.get(&(pkt.flow, pkt.dir)).map_or(INITIAL_RTO_NS, Sender::rto_ns);
                    let at = self.now.max(pkt.emit_ns + rto);
                    let copy = Packet {
                        pid: 0,
                        retransmission: true,
                        ..pkt
                    };
                    self.schedule(at, Event::Emit(copy));
                }
            }
        }
    }

    fn arrive(&mut self, node: Tap, pkt: Packet) {
        self.observe(node, &pkt);
        let now = self.now;
        if let Some(t) = self.truth.get_mut(&pkt.pid) {
            if node == Tap::Core {
                t.t_core_ns = Some(now);
            } else {
                t.t_arrive_ns = Some(now);
            }
        }
        match node {
            Tap::Core => {
                let link = match pkt.dir {
                    Dir::Uplink => LinkId::CoreUp,
                    Dir::Downlink => LinkId::AccessDown,
                };
                self.send(link, pkt);
            }
            _ => self.deliver(node, pkt),
        }
    }

    fn deliver(&mut self, node: Tap, pkt: Packet) {
        if pkt.proto == Proto::Ctrl {
            if node == Tap::App && pkt.dir == Dir::Uplink {
                let reply = Packet {
                    pid: pkt.pid | REPLY_PID_FLAG,
                    dir: Dir::Downlink,
                    ..pkt
                };
                self.emit(reply);
            }
            return;
        }
        if pkt.ack > 0 {
            let now = self.now;
            if let Some(s) = self.senders.get_mut(&(pkt.flow, pkt.dir.reverse())) {
                s.on_ack(now, pkt.ack);
            }
        }
        if pkt.is_data() {
            self.receive_data(&pkt);
        }
    }

    fn receive_data(&mut self, pkt: &Packet) {
        let contiguous = self.run.scenario.retransmit;
        let key = (pkt.flow, pkt.dir);
        let rx = self.receivers.entry(key).or_default();
        rx.accept(pkt.seq, pkt.seq_end(), contiguous);
        rx.unacked += 1;
        if rx.unacked >= 2 || pkt.push {
            self.send_ack(pkt.flow, pkt.dir);
        } else if !rx.timer_armed {
            rx.timer_armed = true;
            rx.timer_generation += 1;
            let generation = rx.timer_generation;
            let at = self.now + (DELAYED_ACK_MS * 1e6) as i64;
            self.schedule(
                at,
                Event::AckTimer {
                    flow: pkt.flow,
                    dir: pkt.dir,
                    generation,
                },
            );
        }

        if pkt.flow == VIDEO_FLOW && pkt.dir == Dir::Uplink {
            if let Some(f) = pkt.frame {
                let state = &mut self.frames[f as usize];
                state.received += pkt.len as u64;
                if state.complete_ns.is_none() && state.received >= state.plan.data_end - state.plan.data_start {
                    state.complete_ns = Some(self.now);
                    let start = self.processing_free_ns.max(self.now);
                    let done = start + (self.run.processing.tau_total_ms() * 1e6).round() as i64;
                    self.processing_free_ns = done;
                    self.schedule(done, Event::ProcessDone { frame: f });
                }
            }
        }
    }

    /// Acknowledges data received on `(flow, data_dir)`.
    fn send_ack(&mut self, flow: u32, data_dir: Dir) {
        let rx = self.receivers.get_mut(&(flow, data_dir)).expect("receiver exists");
        rx.unacked = 0;
        rx.timer_armed = false;
        rx.timer_generation += 1;
        let ack = rx.rcv_nxt;
        let dir = data_dir.reverse();
        let seq = self.senders.get(&(flow, dir)).map_or(0, |s| s.snd_nxt);
        let pkt = Packet {
            pid: 0,
            flow,
            dir,
            proto: Proto::Stream,
            seq,
            ack,
            len: 0,
            marker: Marker::None,
            push: false,
            frame: None,
            retransmission: false,
            emit_ns: 0,
        };
        self.emit(pkt);
    }

    fn ack_timer(&mut self, flow: u32, dir: Dir, generation: u64) {
        let Some(rx) = self.receivers.get_mut(&(flow, dir)) else {
            return;
        };
        if rx.timer_generation != generation || !rx.timer_armed {
            return;
        }
        rx.timer_armed = false;
        if rx.unacked > 0 {
            self.send_ack(flow, dir);
        }
    }

    fn process_done(&mut self, frame: u32) {
        self.frames[frame as usize].command_ns = Some(self.now);
        let seq = self
            .senders
            .get(&(VIDEO_FLOW, Dir::Downlink))
            .map_or(0, |s| s.snd_nxt);
        let pkt = Packet {
            pid: 0,
            flow: VIDEO_FLOW,
            dir: Dir::Downlink,
            proto: Proto::Stream,
            seq,
            ack: 0,
            len: self.run.processing.response_bytes(),
            marker: Marker::None,
            push: true,
            frame: Some(frame),
            retransmission: false,
            emit_ns: 0,
        };
        self.emit(pkt);
    }

    fn finish(self) -> CaptureSet {
        let run = self.run;
        let horizon_ns = self.observations.iter().map(|o| o.t_ns).max().unwrap_or(0);
        let trace_s = (horizon_ns as f64 / 1e9).max(run.clocks.resync_interval_s());
        let ntp = sample_ntp_trace(&run.clocks, trace_s, run.seed);
        let clocks = NodeClocks::from_trace(&run.clocks, &ntp);

        let mut set = CaptureSet {
            ntp,
            ..Default::default()
        };
        for o in &self.observations {
            let local_ns = clocks.local_ns(o.tap, o.t_ns);
            let p = &o.pkt;
            let rec = CaptureRecord {
                tap: o.tap,
                t_us: local_ns.div_euclid(1000),
                flow: p.flow,
                dir: p.dir,
                proto: p.proto,
                seq: p.seq,
                ack: p.ack,
                payload_len: p.len as i64,
                marker: p.marker,
                pid: p.pid,
            };
            match o.tap {
                Tap::Ue => set.ue.push(rec),
                Tap::Core => set.core.push(rec),
                Tap::App => set.app.push(rec),
            }
        }

        set.truth = TruthLog {
            packets: self.truth.into_values().collect(),
            frames: self
                .frames
                .iter()
                .map(|f| {
                    let first = f.first_emit_ns.unwrap_or(f.plan.t_ns);
                    FrameTruth {
                        frame_idx: f.plan.idx,
                        bytes: f.plan.bytes,
                        t_first_emit_ns: first,
                        t_complete_ns: f.complete_ns,
                        owd_ms: f.complete_ns.map(|c| (c - first) as f64 / 1e6),
                        t_command_ns: f.command_ns,
                    }
                })
                .collect(),
        };
        set
    }
}
