use super::{RDMap, FRAME_SIDE};

pub const SNR_MIN_DB: f64 = 5.0;
pub const SNR_MAX_DB: f64 = 40.0;

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w, "source shape mismatch");
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|i| {
                let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let x0 = x.floor() as usize;
                let x1 = (x0 + 1).min(inp - 1);
                (x0, x1, x - x0 as f64)
            })
            .collect()
    };
    let rows = taps(oh, h);
    let cols = taps(ow, w);
    let mut out = Vec::with_capacity(oh * ow);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            let top = src[r0 * w + c0] * (1.0 - fx) + src[r0 * w + c1] * fx;
            let bot = src[r1 * w + c0] * (1.0 - fx) + src[r1 * w + c1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Clips SNR values to [5, 40] dB, scales to [0, 1] and resizes an `h`×`w`
/// grid to `oh`×`ow`.
pub fn normalize_values(values: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let scaled: Vec<f64> = values
        .iter()
        .map(|&x| (x.clamp(SNR_MIN_DB, SNR_MAX_DB) - SNR_MIN_DB) / (SNR_MAX_DB - SNR_MIN_DB))
        .collect();
    resize_bilinear(&scaled, h, w, oh, ow)
        .into_iter()
        .map(|x| x.clamp(0.0, 1.0) as f32)
        .collect()
}

/// Normalized 64×64 network input of one RD map (rows are range cells).
pub fn normalize_frame(map: &RDMap) -> Vec<f32> {
    normalize_values(&map.values, map.n_range, map.n_velocity, FRAME_SIDE, FRAME_SIDE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_midpoint() {
        let out = normalize_values(&[5.0, 40.0, 22.5, 60.0, -3.0], 1, 5, 1, 5);
        assert_eq!(out, vec![0.0, 1.0, 0.5, 1.0, 0.0]);
    }

    #[test]
    fn constant_map_stays_constant() {
        let map = RDMap {
            n_range: 68,
            n_velocity: 61,
            values: vec![20.0; 68 * 61],
            noise_floor: 0.0,
            timestamp: 0.0,
            aliased: false,
        };
        let out = normalize_frame(&map);
        assert_eq!(out.len(), 64 * 64);
        assert!(out.iter().all(|&v| (v - 15.0 / 35.0).abs() < 1e-6));
    }

    #[test]
    fn identity_resize() {
        let src: Vec<f64> = (0..12).map(|i| i as f64).collect();
        assert_eq!(resize_bilinear(&src, 3, 4, 3, 4), src);
    }

    proptest! {
        #[test]
        fn monotone(a in -20.0f64..70.0, b in -20.0f64..70.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let out = normalize_values(&[lo, hi], 1, 2, 1, 2);
            prop_assert!(out[0] <= out[1]);
        }

        #[test]
        fn resized_frames_monotone_and_bounded(
            base in proptest::collection::vec(-10.0f64..60.0, 20),
            bump in proptest::collection::vec(0.0f64..10.0, 20),
        ) {
            let up: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let x = normalize_values(&base, 4, 5, 64, 64);
            let y = normalize_values(&up, 4, 5, 64, 64);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!(p <= q);
                prop_assert!((0.0..=1.0).contains(p));
            }
        }
    }
}
