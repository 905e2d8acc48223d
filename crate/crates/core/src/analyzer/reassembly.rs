//! Byte-stream reconstruction and multipart frame segmentation.

use std::ops::Range;

use crate::model::{CaptureRecord, Dir, Marker};

use super::AnalyzeError;

/// One unique payload range of a reassembled stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub seq: u64,
    pub len: u64,
    pub t_us: i64,
    pub pid: u64,
    pub marker: Marker,
    /// Position of the record in its capture file; "after" means a larger index.
    pub index: usize,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.seq + self.len
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamView {
    pub segments: Vec<Segment>,
    pub gaps: Vec<Range<u64>>,
    pub total_bytes: u64,
}

/// Orders one tap's data segments of `(flow, dir)` by seq, collapses
/// duplicates (first capture wins) and reports holes.
pub fn reassemble(records: &[CaptureRecord], flow: u32, dir: Dir) -> Result<StreamView, AnalyzeError> {
    let mut segs: Vec<Segment> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.flow == flow && r.dir == dir && r.is_data())
        .map(|(index, r)| Segment {
            seq: r.seq,
            len: r.payload_len as u64,
            t_us: r.t_us,
            pid: r.pid,
            marker: r.marker,
            index,
        })
        .collect();
    segs.sort_by_key(|s| (s.seq, s.index));

    let mut view = StreamView::default();
    for s in segs {
        if let Some(prev) = view.segments.last() {
            if s.seq == prev.seq && s.len == prev.len {
                continue;
            }
            if s.seq < prev.end() {
                return Err(AnalyzeError::Malformed(format!(
                    "flow {flow}: segment [{}, {}) overlaps [{}, {})",
                    s.seq,
                    s.end(),
                    prev.seq,
                    prev.end()
                )));
            }
            if s.seq > prev.end() {
                view.gaps.push(prev.end()..s.seq);
            }
        }
        view.total_bytes += s.len;
        view.segments.push(s);
    }
    Ok(view)
}

/// The image payload between two boundary markers.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameExtent {
    pub idx: usize,
    /// First byte after the opening marker.
    pub start_seq: u64,
    /// Opening seq of the closing marker, or the end of the last segment for
    /// an unterminated tail.
    pub end_seq: u64,
    pub segments: Vec<Segment>,
    /// Terminated by a marker with no missing bytes in between.
    pub complete: bool,
}

impl FrameExtent {
    pub fn byte_len(&self) -> u64 {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn pids(&self) -> Vec<u64> {
        self.segments.iter().map(|s| s.pid).collect()
    }

    pub fn first(&self) -> Option<&Segment> {
        self.segments.first()
    }

    pub fn last(&self) -> Option<&Segment> {
        self.segments.last()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Segmentation {
    pub frames: Vec<FrameExtent>,
    pub warnings: Vec<String>,
}

impl Segmentation {
    pub fn complete(&self) -> impl Iterator<Item = &FrameExtent> {
        self.frames.iter().filter(|f| f.complete && !f.segments.is_empty())
    }
}

/// Splits a reassembled stream into frames: frame k is every data segment
/// strictly between boundary k and boundary k + 1.
pub fn segment_frames(view: &StreamView) -> Segmentation {
    let mut out = Segmentation::default();
    let mut open: Option<FrameExtent> = None;

    for s in &view.segments {
        if s.marker == Marker::FrameBoundary {
            if let Some(mut f) = open.take() {
                f.end_seq = s.seq;
                f.complete = f.byte_len() == f.end_seq - f.start_seq;
                out.frames.push(f);
            }
            open = Some(FrameExtent {
                idx: out.frames.len(),
                start_seq: s.end(),
                end_seq: s.end(),
                segments: Vec::new(),
                complete: false,
            });
        } else if let Some(f) = open.as_mut() {
            f.end_seq = s.end();
            f.segments.push(s.clone());
        }
    }
    if let Some(f) = open {
        if !f.segments.is_empty() {
            out.frames.push(f);
        }
    }
    if !view.segments.iter().any(|s| s.marker == Marker::FrameBoundary) && !view.segments.is_empty() {
        out.warnings.push("no frame boundary markers in stream".to_string());
    }
    out
}
