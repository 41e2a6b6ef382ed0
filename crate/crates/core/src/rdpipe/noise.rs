use crate::error::{Error, Result};

/// Noise floor in dB: the median of the linear cell powers.
pub fn estimate_noise_floor(power: &[f64]) -> Result<f64> {
    if power.is_empty() {
        return Err(Error::Shape("noise floor of an empty grid".into()));
    }
    if power.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::NonFinite("power grid"));
    }
    let mut v = power.to_vec();
    let mid = v.len() / 2;
    let (_, &mut hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if v.len() % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    if median <= 0.0 {
        return Err(Error::ZeroPower);
    }
    Ok(10.0 * median.log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::RadioConfig;
    use crate::rdpipe::{rd_power, RDGrid, RDMap};
    use crate::sim::{synthesize_channel, ImpairmentSpec};

    #[test]
    fn uniform_grid() {
        let f = estimate_noise_floor(&[4.0; 10]).unwrap();
        assert!((f - 10.0 * 4f64.log10()).abs() < 1e-12);
        let map = RDMap::from_power(&[4.0; 6], 2, 3, 0.0, false).unwrap();
        assert!(map.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn median_ignores_outlier() {
        let mut p = vec![1.0; 101];
        let base = estimate_noise_floor(&p).unwrap();
        p[7] = 1e9;
        assert_eq!(estimate_noise_floor(&p).unwrap(), base);
        assert!((estimate_noise_floor(&[1.0, 3.0]).unwrap() - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn degenerate_grids() {
        assert!(matches!(estimate_noise_floor(&[0.0; 4]), Err(Error::ZeroPower)));
        assert!(estimate_noise_floor(&[]).is_err());
        assert!(estimate_noise_floor(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn awgn_floor_tracks_exponential_median() {
        // cell powers of complex AWGN are exponential with mean σ², so the
        // median sits at σ²·ln 2
        let radio = RadioConfig::default();
        let grid = RDGrid::default();
        let sigma2 = 2.0;
        let mut sum = 0.0;
        for seed in 0..50 {
            let imp = ImpairmentSpec {
                noise_power: sigma2,
                rng_seed: seed,
                ..Default::default()
            };
            let d = synthesize_channel(&radio, &[], &imp, 32).unwrap();
            sum += estimate_noise_floor(&rd_power(&d, &radio, &grid).unwrap()).unwrap();
        }
        let mean = sum / 50.0;
        let expect = 10.0 * (sigma2 * std::f64::consts::LN_2).log10();
        assert!((mean - expect).abs() <= 1.0, "{mean} vs {expect}");
    }
}
