//! Domain types shared by the emulator, the analyzer and the KPI engine,
//! plus the canonical NDJSON capture format.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Capture point. Also used as the node identity (UE, packet core, app server).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tap {
    Ue,
    Core,
    App,
}

impl Tap {
    pub const ALL: [Tap; 3] = [Tap::Ue, Tap::Core, Tap::App];

    pub fn index(self) -> usize {
        match self {
            Tap::Ue => 0,
            Tap::Core => 1,
            Tap::App => 2,
        }
    }

    /// File name of this tap's capture inside a capture directory.
    pub fn file_name(self) -> &'static str {
        match self {
            Tap::Ue => "ue.ndjson",
            Tap::Core => "core.ndjson",
            Tap::App => "app.ndjson",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tap::Ue => "UE",
            Tap::Core => "CORE",
            Tap::App => "APP",
        }
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Dir {
    Uplink,
    Downlink,
}

impl Dir {
    /// The tap where packets travelling in this direction are emitted.
    pub fn origin(self) -> Tap {
        match self {
            Dir::Uplink => Tap::Ue,
            Dir::Downlink => Tap::App,
        }
    }

    pub fn destination(self) -> Tap {
        match self {
            Dir::Uplink => Tap::App,
            Dir::Downlink => Tap::Ue,
        }
    }

    pub fn reverse(self) -> Dir {
        match self {
            Dir::Uplink => Dir::Downlink,
            Dir::Downlink => Dir::Uplink,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Proto {
    Ctrl,
    Stream,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Marker {
    #[default]
    None,
    FrameBoundary,
}

/// Bit set in the pid of a control reply; the remaining bits carry the pid of
/// the request it answers.
pub const REPLY_PID_FLAG: u64 = 1 << 63;

/// One timestamped packet observation at one tap.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub tap: Tap,
    /// Local clock of the tap, microseconds.
    pub t_us: i64,
    pub flow: u32,
    pub dir: Dir,
    pub proto: Proto,
    /// Byte offset of the first payload byte (STREAM only).
    pub seq: u64,
    /// Cumulative acknowledgment, 0 when the record is not an ack.
    pub ack: u64,
    /// Payload bytes. Signed so that malformed captures can be reported
    /// instead of rejected by the decoder.
    #[serde(rename = "len")]
    pub payload_len: i64,
    pub marker: Marker,
    pub pid: u64,
}

impl CaptureRecord {
    pub fn is_data(&self) -> bool {
        self.proto == Proto::Stream && self.payload_len > 0
    }

    pub fn is_ack(&self) -> bool {
        self.proto == Proto::Stream && self.ack > 0
    }

    /// One past the last payload byte.
    pub fn seq_end(&self) -> u64 {
        self.seq + self.payload_len.max(0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("pid {pid} appears more than once at tap {tap}")]
    DuplicatePid { tap: Tap, pid: u64 },
    #[error("negative payload length {len}")]
    NegativePayload { len: i64 },
    #[error("frame boundary marker without payload")]
    EmptyBoundary,
    #[error("seq regression on flow {flow} {dir:?}: {seq} after {previous}")]
    SeqRegression {
        flow: u32,
        dir: Dir,
        seq: u64,
        previous: u64,
    },
}

/// First invariant violation found in a record stream.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("record {index}: {violation}")]
pub struct ValidationError {
    pub index: usize,
    pub violation: Violation,
}

/// Checks every `CaptureRecord` invariant, per tap.
///
/// A data segment whose `(seq, len)` was already emitted on the same flow and
/// direction is a retransmission and does not count as a seq regression.
pub fn validate(records: &[CaptureRecord]) -> Result<(), ValidationError> {
    let mut pids: HashSet<(Tap, u64)> = HashSet::new();
    let mut emitted: HashMap<(u32, Dir), (u64, HashSet<(u64, i64)>)> = HashMap::new();

    for (index, r) in records.iter().enumerate() {
        let fail = |violation| Err(ValidationError { index, violation });
        if r.payload_len < 0 {
            return fail(Violation::NegativePayload { len: r.payload_len });
        }
        if r.marker == Marker::FrameBoundary && r.payload_len == 0 {
            return fail(Violation::EmptyBoundary);
        }
        if !pids.insert((r.tap, r.pid)) {
            return fail(Violation::DuplicatePid { tap: r.tap, pid: r.pid });
        }
        if r.is_data() && r.tap == r.dir.origin() {
            let (max_seq, seen) = emitted.entry((r.flow, r.dir)).or_default();
            let known = seen.contains(&(r.seq, r.payload_len));
            if r.seq < *max_seq && !known {
                return fail(Violation::SeqRegression {
                    flow: r.flow,
                    dir: r.dir,
                    seq: r.seq,
                    previous: *max_seq,
                });
            }
            *max_seq = (*max_seq).max(r.seq);
            seen.insert((r.seq, r.payload_len));
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: record belongs to tap {found}, expected {expected}")]
    WrongTap {
        line: usize,
        found: Tap,
        expected: Tap,
    },
    #[error("line {line}: {violation}")]
    Invalid { line: usize, violation: Violation },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads one NDJSON capture stream. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_ndjson<R: BufRead>(reader: R) -> Result<Vec<CaptureRecord>, ModelError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| ModelError::Parse { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads and validates one tap file. Violations are reported with the line
/// number of the offending record.
pub fn read_tap<R: BufRead>(reader: R, tap: Tap) -> Result<Vec<CaptureRecord>, ModelError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptureRecord =
            serde_json::from_str(&line).map_err(|source| ModelError::Parse { line: i + 1, source })?;
        if rec.tap != tap {
            return Err(ModelError::WrongTap {
                line: i + 1,
                found: rec.tap,
                expected: tap,
            });
        }
        records.push(rec);
        lines.push(i + 1);
    }
    validate(&records).map_err(|e| ModelError::Invalid {
        line: lines[e.index],
        violation: e.violation,
    })?;
    Ok(records)
}

pub fn write_ndjson<W: Write, T: Serialize>(mut writer: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

// ---------------------------------------------------------------------------
// Scenario

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tech {
    FourG,
    FiveG,
}

impl Tech {
    pub fn as_str(self) -> &'static str {
        match self {
            Tech::FourG => "FOUR_G",
            Tech::FiveG => "FIVE_G",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Tech::FourG => "4G",
            Tech::FiveG => "5G",
        }
    }

    /// Maximum achievable bandwidth, Mbit/s.
    pub fn default_bandwidth_cap(self) -> f64 {
        match self {
            Tech::FiveG => 54.6,
            Tech::FourG => 32.2,
        }
    }

    /// Access-network one-way latency (up, down), ms.
    pub fn default_base_owd(self) -> (f64, f64) {
        match self {
            Tech::FiveG => (8.0, 4.0),
            Tech::FourG => (20.0, 10.0),
        }
    }
}

impl std::str::FromStr for Tech {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "FOUR_G" | "4G" => Ok(Tech::FourG),
            "FIVE_G" | "5G" => Ok(Tech::FiveG),
            other => Err(format!("unknown tech `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Range {
    Edge,
    Regional,
    National,
}

impl Range {
    /// One-way delay added on the core interface, ms.
    pub fn added_owd_ms(self) -> f64 {
        match self {
            Range::Edge => 0.0,
            Range::Regional => 2.0,
            Range::National => 4.0,
        }
    }

    pub fn distance_km(self) -> u32 {
        match self {
            Range::Edge => 0,
            Range::Regional => 200,
            Range::National => 400,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Range::Edge => "EDGE",
            Range::Regional => "REGIONAL",
            Range::National => "NATIONAL",
        }
    }
}

impl std::str::FromStr for Range {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EDGE" => Ok(Range::Edge),
            "REGIONAL" => Ok(Range::Regional),
            "NATIONAL" => Ok(Range::National),
            other => Err(format!("unknown range `{other}`")),
        }
    }
}

/// Full path model for one emulated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    tech: Tech,
    range: Range,
    pub base_owd_up_ms: f64,
    pub base_owd_down_ms: f64,
    pub jitter_std_ms: f64,
    pub loss_prob: f64,
    /// `None` disables the rate limit.
    pub bandwidth_cap_mbps: Option<f64>,
    pub retransmit: bool,
}

impl Scenario {
    /// Builds a scenario with the technology defaults. Edge range requires 5G.
    pub fn new(tech: Tech, range: Range) -> Result<Self, ModelError> {
        if range == Range::Edge && tech != Tech::FiveG {
            return Err(ModelError::Config(
                "unsupported scenario: EDGE range requires tech FIVE_G".into(),
            ));
        }
        let (up, down) = tech.default_base_owd();
        Ok(Scenario {
            tech,
            range,
            base_owd_up_ms: up,
            base_owd_down_ms: down,
            jitter_std_ms: 0.5,
            loss_prob: 0.0,
            bandwidth_cap_mbps: Some(tech.default_bandwidth_cap()),
            retransmit: false,
        })
    }

    pub fn tech(&self) -> Tech {
        self.tech
    }

    pub fn range(&self) -> Range {
        self.range
    }

    pub fn added_owd_ms(&self) -> f64 {
        self.range.added_owd_ms()
    }

    /// Short label such as `5G-EDGE`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.tech.label(), self.range.as_str())
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.range == Range::Edge && self.tech != Tech::FiveG {
            return bad("unsupported scenario: EDGE range requires tech FIVE_G");
        }
        if !(self.base_owd_up_ms >= 0.0 && self.base_owd_down_ms >= 0.0) {
            return bad("base one-way delays must be >= 0");
        }
        if !(self.jitter_std_ms >= 0.0) {
            return bad("jitter_std must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return bad("loss_prob must lie in [0, 1]");
        }
        if let Some(cap) = self.bandwidth_cap_mbps {
            if !(cap > 0.0) {
                return bad("bandwidth_cap must be > 0");
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Clocks

/// Per-node clock offsets and offset-noise, indexed by [`Tap::index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    offset_ms: [f64; 3],
    sigma_ms: [f64; 3],
    resync_interval_s: f64,
}

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel {
            offset_ms: [0.0; 3],
            sigma_ms: [0.387, 0.317, 0.117],
            resync_interval_s: 10.0,
        }
    }
}

impl ClockModel {
    pub fn new(offset_ms: [f64; 3], sigma_ms: [f64; 3], resync_interval_s: f64) -> Result<Self, ModelError> {
        if sigma_ms.iter().any(|s| !(*s >= 0.0)) {
            return Err(ModelError::Config("clock sigma must be >= 0".into()));
        }
        if !(resync_interval_s > 0.0) {
            return Err(ModelError::Config("resync_interval must be > 0".into()));
        }
        Ok(ClockModel {
            offset_ms,
            sigma_ms,
            resync_interval_s,
        })
    }

    /// Ideal clocks: no offset, no noise.
    pub fn perfect() -> Self {
        ClockModel {
            offset_ms: [0.0; 3],
            sigma_ms: [0.0; 3],
            resync_interval_s: 10.0,
        }
    }

    pub fn offset_ms(&self, node: Tap) -> f64 {
        self.offset_ms[node.index()]
    }

    pub fn sigma_ms(&self, node: Tap) -> f64 {
        self.sigma_ms[node.index()]
    }

    pub fn offsets_ms(&self) -> [f64; 3] {
        self.offset_ms
    }

    pub fn sigmas_ms(&self) -> [f64; 3] {
        self.sigma_ms
    }

    pub fn resync_interval_s(&self) -> f64 {
        self.resync_interval_s
    }
}

// ---------------------------------------------------------------------------
// Video

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Encoder {
    Mjpeg,
    H264,
}

impl std::str::FromStr for Encoder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "MJPEG" => Ok(Encoder::Mjpeg),
            "H264" => Ok(Encoder::H264),
            other => Err(format!("unknown encoder `{other}`")),
        }
    }
}

impl Encoder {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoder::Mjpeg => "MJPEG",
            Encoder::H264 => "H264",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Resolution {
    Vga,
    D1,
    Hd,
}

impl Resolution {
    pub const ALL: [Resolution; 3] = [Resolution::Vga, Resolution::D1, Resolution::Hd];

    pub fn dimensions(self) -> (u32, u32) {
        match self {
            Resolution::Vga => (640, 480),
            Resolution::D1 => (720, 576),
            Resolution::Hd => (1280, 720),
        }
    }

    pub fn pixels(self) -> u32 {
        let (w, h) = self.dimensions();
        w * h
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Vga => "VGA",
            Resolution::D1 => "D1",
            Resolution::Hd => "HD",
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "VGA" => Ok(Resolution::Vga),
            "D1" => Ok(Resolution::D1),
            "HD" => Ok(Resolution::Hd),
            other => Err(format!("unknown resolution `{other}`")),
        }
    }
}

/// Default mean encoded frame size in bytes.
pub fn default_frame_bytes(encoder: Encoder, resolution: Resolution) -> u64 {
    let mjpeg = match resolution {
        Resolution::Vga => 120_000,
        Resolution::D1 => 220_000,
        Resolution::Hd => 340_000,
    };
    match encoder {
        Encoder::Mjpeg => mjpeg,
        Encoder::H264 => mjpeg / 4,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoConfig {
    pub encoder: Encoder,
    pub resolution: Resolution,
    pub fps: f64,
    pub mean_frame_bytes: u64,
    pub frame_size_cv: f64,
}

impl VideoConfig {
    /// 20 fps with the default frame size for the encoder and resolution.
    pub fn new(encoder: Encoder, resolution: Resolution) -> Self {
        VideoConfig {
            encoder,
            resolution,
            fps: 20.0,
            mean_frame_bytes: default_frame_bytes(encoder, resolution),
            frame_size_cv: 0.1,
        }
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.fps > 0.0) {
            return Err(ModelError::Config("fps must be > 0".into()));
        }
        if self.mean_frame_bytes == 0 {
            return Err(ModelError::Config("mean_frame_bytes must be > 0".into()));
        }
        if !(self.frame_size_cv >= 0.0) {
            return Err(ModelError::Config("frame_size_cv must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for VideoConfig {
    fn default() -> Self {
        VideoConfig::new(Encoder::Mjpeg, Resolution::Vga)
    }
}

// ---------------------------------------------------------------------------
// Processing

/// Application processing time per frame, split across the blob transform,
/// detection, interpretation and command-creation stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessingModel {
    tau_total_ms: f64,
    stage_fractions: [f64; 4],
    response_bytes: u32,
}

impl Default for ProcessingModel {
    fn default() -> Self {
        ProcessingModel {
            tau_total_ms: 20.3,
            stage_fractions: [0.25, 0.60, 0.10, 0.05],
            response_bytes: 128,
        }
    }
}

impl ProcessingModel {
    pub const STAGES: [&'static str; 4] = ["blob", "detection", "interpretation", "command"];

    pub fn new(tau_total_ms: f64, stage_fractions: [f64; 4], response_bytes: u32) -> Result<Self, ModelError> {
        if !(tau_total_ms >= 0.0) {
            return Err(ModelError::Config("tau_total must be >= 0".into()));
        }
        if stage_fractions.iter().any(|f| !(*f >= 0.0)) {
            return Err(ModelError::Config("stage fractions must be >= 0".into()));
        }
        let sum: f64 = stage_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::Config(format!("stage fractions sum to {sum}, expected 1")));
        }
        if response_bytes == 0 {
            return Err(ModelError::Config("response_bytes must be > 0".into()));
        }
        Ok(ProcessingModel {
            tau_total_ms,
            stage_fractions,
            response_bytes,
        })
    }

    pub fn tau_total_ms(&self) -> f64 {
        self.tau_total_ms
    }

    pub fn stage_fractions(&self) -> [f64; 4] {
        self.stage_fractions
    }

    pub fn stage_ms(&self) -> [f64; 4] {
        self.stage_fractions.map(|f| f * self.tau_total_ms)
    }

    pub fn response_bytes(&self) -> u32 {
        self.response_bytes
    }
}

/// One video frame's reconstructed timing across the UE and APP taps, in
/// offset-corrected microseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub frame_idx: usize,
    pub byte_len: u64,
    pub t_first_ue: f64,
    pub t_last_ue: f64,
    pub t_ack_ue: Option<f64>,
    pub t_first_app: Option<f64>,
    pub t_last_app: Option<f64>,
    pub complete: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(tap: Tap, pid: u64, seq: u64, len: i64) -> CaptureRecord {
        CaptureRecord {
            tap,
            t_us: 0,
            flow: 1,
            dir: Dir::Uplink,
            proto: Proto::Stream,
            seq,
            ack: 0,
            payload_len: len,
            marker: Marker::None,
            pid,
        }
    }

    #[test]
    fn empty_stream_is_valid() {
        assert!(validate(&[]).is_ok());
    }

    #[test]
    fn single_record_is_valid() {
        assert!(validate(&[rec(Tap::Ue, 1, 0, 100)]).is_ok());
    }

    #[test]
    fn duplicate_pid_same_tap() {
        let err = validate(&[rec(Tap::Ue, 7, 0, 100), rec(Tap::Ue, 7, 100, 100)]).unwrap_err();
        assert_eq!(err.index, 1);
        assert_eq!(err.violation, Violation::DuplicatePid { tap: Tap::Ue, pid: 7 });
    }

    #[test]
    fn same_pid_on_different_taps_is_fine() {
        assert!(validate(&[rec(Tap::Ue, 7, 0, 100), rec(Tap::App, 7, 0, 100)]).is_ok());
    }

    #[test]
    fn negative_payload() {
        let err = validate(&[rec(Tap::Ue, 1, 0, -1)]).unwrap_err();
        assert_eq!(err.violation, Violation::NegativePayload { len: -1 });
    }

    #[test]
    fn empty_boundary() {
        let mut r = rec(Tap::Ue, 1, 0, 0);
        r.marker = Marker::FrameBoundary;
        assert_eq!(validate(&[r]).unwrap_err().violation, Violation::EmptyBoundary);
    }

    #[test]
    fn seq_regression_at_origin_only() {
        let recs = [rec(Tap::Ue, 1, 100, 100), rec(Tap::Ue, 2, 0, 100)];
        assert!(matches!(
            validate(&recs).unwrap_err().violation,
            Violation::SeqRegression { seq: 0, previous: 100, .. }
        ));
        // the APP tap is not the origin of uplink traffic
        let recs = [rec(Tap::App, 1, 100, 100), rec(Tap::App, 2, 0, 100)];
        assert!(validate(&recs).is_ok());
    }

    #[test]
    fn retransmission_is_not_a_regression() {
        let recs = [rec(Tap::Ue, 1, 0, 100), rec(Tap::Ue, 2, 100, 100), rec(Tap::Ue, 3, 0, 100)];
        assert!(validate(&recs).is_ok());
    }

    #[test]
    fn ndjson_field_names() {
        let mut r = rec(Tap::Core, 42, 1400, 1400);
        r.marker = Marker::FrameBoundary;
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(
            line,
            r#"{"tap":"CORE","t_us":0,"flow":1,"dir":"UPLINK","proto":"STREAM","seq":1400,"ack":0,"len":1400,"marker":"FRAME_BOUNDARY","pid":42}"#
        );
    }

    #[test]
    fn read_tap_reports_line_numbers() {
        let good = serde_json::to_string(&rec(Tap::Ue, 1, 0, 10)).unwrap();
        let text = format!("{good}\n\n{{not json\n");
        match read_tap(text.as_bytes(), Tap::Ue) {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let dup = format!("{good}\n{good}\n");
        match read_tap(dup.as_bytes(), Tap::Ue) {
            Err(ModelError::Invalid { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn range_added_delay_map() {
        for tech in [Tech::FourG, Tech::FiveG] {
            for (range, ms) in [(Range::Regional, 2.0), (Range::National, 4.0)] {
                assert_eq!(Scenario::new(tech, range).unwrap().added_owd_ms(), ms);
            }
        }
        assert_eq!(Scenario::new(Tech::FiveG, Range::Edge).unwrap().added_owd_ms(), 0.0);
    }

    #[test]
    fn edge_requires_5g() {
        assert!(Scenario::new(Tech::FourG, Range::Edge).is_err());
    }

    #[test]
    fn tech_caps() {
        assert_eq!(Scenario::new(Tech::FiveG, Range::Edge).unwrap().bandwidth_cap_mbps, Some(54.6));
        assert_eq!(Scenario::new(Tech::FourG, Range::National).unwrap().bandwidth_cap_mbps, Some(32.2));
    }

    #[test]
    fn processing_fractions_must_sum_to_one() {
        assert!(ProcessingModel::new(20.3, [0.25, 0.6, 0.1, 0.05], 128).is_ok());
        assert!(ProcessingModel::new(20.3, [0.25, 0.6, 0.1, 0.06], 128).is_err());
        assert!(ProcessingModel::new(20.3, [0.25, 0.6, 0.1, 0.05 + 5e-10], 128).is_ok());
        assert!(ProcessingModel::new(-1.0, [0.25, 0.6, 0.1, 0.05], 128).is_err());
        assert_eq!(ProcessingModel::default().tau_total_ms(), 20.3);
    }

    #[test]
    fn clock_model_rejects_bad_values() {
        assert!(ClockModel::new([0.0; 3], [-0.1, 0.0, 0.0], 10.0).is_err());
        assert!(ClockModel::new([0.0; 3], [0.0; 3], 0.0).is_err());
        assert_eq!(ClockModel::default().sigmas_ms(), [0.387, 0.317, 0.117]);
    }

    #[test]
    fn resolution_pixels() {
        assert_eq!(Resolution::Vga.pixels(), 640 * 480);
        assert_eq!(Resolution::D1.pixels(), 720 * 576);
        assert_eq!(Resolution::Hd.pixels(), 1280 * 720);
    }
}
