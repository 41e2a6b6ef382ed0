use super::metrics::{EvalReport, Metrics};
use super::train::Sample;
use crate::error::{Error, Result};

/// Average over frames of one clip (`frame_len` values per frame).
fn mean_frame(x: &[f32], frame_len: usize) -> Vec<f64> {
    let frames = x.len() / frame_len;
    let mut m = vec![0.0; frame_len];
    for f in x.chunks_exact(frame_len) {
        for (a, &v) in m.iter_mut().zip(f) {
            *a += v as f64;
        }
    }
    m.iter_mut().for_each(|v| *v /= frames as f64);
    m
}

/// Classifies each test clip by the nearest class centroid of the training
/// clips' mean frames (Euclidean distance, ties to the lower class).
pub fn nearest_centroid(
    train: &[Sample],
    test: &[Sample],
    num_classes: usize,
    frame_len: usize,
) -> Result<EvalReport> {
    if frame_len == 0 {
        return Err(Error::Config("frame_len must be positive".into()));
    }
    if let Some(s) = train
        .iter()
        .chain(test)
        .find(|s| s.x.len() % frame_len != 0 || s.x.is_empty())
    {
        return Err(Error::Shape(format!(
            "clip of {} values is not a whole number of frames",
            s.x.len()
        )));
    }
    let mut sums = vec![vec![0.0; frame_len]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for s in train {
        if s.y >= num_classes {
            return Err(Error::Invalid(format!("label {} out of range", s.y)));
        }
        for (a, v) in sums[s.y].iter_mut().zip(mean_frame(s.x, frame_len)) {
            *a += v;
        }
        counts[s.y] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(c));
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    let pred: Vec<usize> = test
        .iter()
        .map(|s| {
            let m = mean_frame(s.x, frame_len);
            let dist = |c: &Vec<f64>| c.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (0..num_classes).fold(0, |b, i| if dist(&sums[i]) < dist(&sums[b]) { i } else { b })
        })
        .collect();
    let truth: Vec<usize> = test.iter().map(|s| s.y).collect();
    let metrics = Metrics::from_predictions(&pred, &truth, num_classes);
    Ok(EvalReport::new(
        "nearest-centroid",
        metrics,
        (num_classes * frame_len) as u64,
        0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_active_regions() {
        // class c lights up pixel c of a 4-pixel frame
        let clips: Vec<(Vec<f32>, usize)> = (0..4)
            .flat_map(|c| {
                (0..3).map(move |k| {
                    let mut x = vec![0.0f32; 8];
                    x[c] = 1.0;
                    x[4 + c] = 0.5 + 0.1 * k as f32;
                    (x, c)
                })
            })
            .collect();
        let s: Vec<Sample> = clips.iter().map(|(x, y)| Sample { x, y: *y }).collect();
        let r = nearest_centroid(&s, &s, 4, 4).unwrap();
        assert_eq!(r.accuracy, 100.0);
        let single = nearest_centroid(&s, &s[5..6], 4, 4).unwrap();
        assert_eq!(single.confusion[s[5].y][s[5].y], 1);
    }

    #[test]
    fn missing_class_is_rejected() {
        let x = vec![0.0f32; 4];
        let s = [Sample { x: &x, y: 0 }];
        assert!(matches!(
            nearest_centroid(&s, &s, 2, 4),
            Err(Error::MissingClass(1))
        ));
        assert!(nearest_centroid(&s, &s, 1, 3).is_err());
    }
}
