use super::{ClipMeta, RDClip, RDGrid};
use crate::error::{Error, Result};
use crate::sim::scenario::Annotation;
use crate::sim::GestureKind;

/// Gesture interval in RD-frame indices, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledSpan {
    pub label: GestureKind,
    pub start: usize,
    pub end: usize,
}

/// RD frames whose CPI centre falls inside an OFDM-frame annotation.
pub fn rd_span(ann: &Annotation, grid: &RDGrid, num_rd_frames: usize) -> Option<LabeledSpan> {
    let inside = |k: usize| {
        let c = grid.cpi_center(k);
        c >= ann.start_frame as f64 && c < ann.end_frame as f64
    };
    let start = (0..num_rd_frames).find(|&k| inside(k))?;
    let end = (start..num_rd_frames).take_while(|&k| inside(k)).last()? + 1;
    Some(LabeledSpan {
        label: ann.label,
        start,
        end,
    })
}

/// Cuts `frames` (each one normalized frame) into windows of `window` frames
/// every `stride` frames. A window is labeled when exactly one gesture span
/// lies entirely inside it; other windows carry no label.
pub fn segment_clips(
    frames: &[Vec<f32>],
    spans: &[LabeledSpan],
    window: usize,
    stride: usize,
    meta: &ClipMeta,
) -> Result<Vec<RDClip>> {
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be >= 1".into()));
    }
    if frames.len() < window {
        return Ok(Vec::new());
    }
    let mut clips = Vec::new();
    let mut start = 0;
    while start + window <= frames.len() {
        let end = start + window;
        let mut inside = spans.iter().filter(|s| s.start >= start && s.end <= end);
        let label = match (inside.next(), inside.next()) {
            (Some(s), None) => Some(s.label),
            _ => None,
        };
        let mut payload = Vec::with_capacity(window * RDClip::FRAME_LEN);
        for f in &frames[start..end] {
            payload.extend_from_slice(f);
        }
        let clip_meta = ClipMeta {
            start_frame: start,
            ..meta.clone()
        };
        clips.push(RDClip::new(payload, label, clip_meta)?);
        start += stride;
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize) -> Vec<Vec<f32>> {
        (0..n).map(|_| vec![0.25; RDClip::FRAME_LEN]).collect()
    }

    fn span(start: usize, end: usize) -> LabeledSpan {
        LabeledSpan {
            label: GestureKind::ALL[1],
            start,
            end,
        }
    }

    #[test]
    fn one_window_one_gesture() {
        let c = segment_clips(&frames(32), &[span(4, 28)], 32, 32, &ClipMeta::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].label, Some(GestureKind::ALL[1]));
        assert_eq!(c[0].num_frames(), 32);
    }

    #[test]
    fn second_window_gets_the_label() {
        let c = segment_clips(&frames(64), &[span(40, 60)], 32, 32, &ClipMeta::default()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].label, None);
        assert!(c[1].label.is_some());
        assert_eq!(c[1].meta.start_frame, 32);
    }

    #[test]
    fn straddling_gesture_is_unlabeled() {
        let c = segment_clips(&frames(64), &[span(24, 40)], 32, 32, &ClipMeta::default()).unwrap();
        assert!(c.iter().all(|c| c.label.is_none()));
    }

    #[test]
    fn short_stream_yields_nothing() {
        assert!(segment_clips(&frames(31), &[], 32, 4, &ClipMeta::default())
            .unwrap()
            .is_empty());
        assert!(segment_clips(&frames(40), &[], 32, 0, &ClipMeta::default()).is_err());
    }

    #[test]
    fn window_count_with_stride() {
        let c = segment_clips(&frames(50), &[], 32, 4, &ClipMeta::default()).unwrap();
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn annotation_to_rd_frames() {
        let grid = RDGrid::default();
        let ann = Annotation {
            label: GestureKind::ALL[0],
            start_frame: 20,
            end_frame: 100,
        };
        // centres at 15.5 + 4k
        let s = rd_span(&ann, &grid, 32).unwrap();
        assert_eq!((s.start, s.end), (2, 22));
        let late = Annotation {
            start_frame: 500,
            end_frame: 600,
            ..ann
        };
        assert!(rd_span(&late, &grid, 32).is_none());
    }
}
