use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// SNR levels swept in the evaluation, dB.
pub const SNR_SWEEP_DB: [f64; 4] = [0.0, 10.0, 20.0, 30.0];

/// Adds circularly symmetric complex Gaussian noise at `snr_db` relative to
/// the mean power of `e`. Each of the real and imaginary parts carries half
/// of the noise variance `mean(|e|^2) / 10^(snr_db / 10)`.
///
/// `snr_db = +inf` returns `e` unchanged.
pub fn add_awgn(e: &[Complex64], snr_db: f64, noise_seed: u64) -> Vec<Complex64> {
    if snr_db == f64::INFINITY || e.is_empty() {
        return e.to_vec();
    }
    let power = e.iter().map(|v| v.norm_sqr()).sum::<f64>() / e.len() as f64;
    let variance = power / 10f64.powf(snr_db / 10.0);
    let sigma = (0.5 * variance).sqrt();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return e.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    e.iter().map(|&v| v + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect()
}

/// `10 log10(mean |e|^2 / mean |noisy - e|^2)`.
pub fn empirical_snr_db(e: &[Complex64], noisy: &[Complex64]) -> f64 {
    let signal: f64 = e.iter().map(|v| v.norm_sqr()).sum();
    let noise: f64 = e.iter().zip(noisy).map(|(a, b)| (b - a).norm_sqr()).sum();
    10.0 * (signal / noise).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Vec<Complex64> {
        (0..n).map(|k| Complex64::from_polar(1.0 + (k % 7) as f64, 0.3 * k as f64)).collect()
    }

    #[test]
    fn infinite_snr_is_identity() {
        let e = ramp(64);
        assert_eq!(add_awgn(&e, f64::INFINITY, 3), e);
    }

    #[test]
    fn same_seed_same_noise() {
        let e = ramp(64);
        assert_eq!(add_awgn(&e, 10.0, 9), add_awgn(&e, 10.0, 9));
        assert_ne!(add_awgn(&e, 10.0, 9), add_awgn(&e, 10.0, 10));
    }

    #[test]
    fn calibrated_at_every_sweep_point() {
        let e = ramp(100_000);
        for (i, snr) in SNR_SWEEP_DB.into_iter().enumerate() {
            let got = empirical_snr_db(&e, &add_awgn(&e, snr, 100 + i as u64));
            assert!((got - snr).abs() <= 0.1, "target {snr} dB, measured {got}");
        }
    }

    #[test]
    fn noise_is_split_evenly_between_quadratures() {
        let e = vec![Complex64::new(1.0, 0.0); 100_000];
        let noisy = add_awgn(&e, 0.0, 5);
        let re: f64 = noisy.iter().map(|v| (v.re - 1.0).powi(2)).sum::<f64>() / e.len() as f64;
        let im: f64 = noisy.iter().map(|v| v.im.powi(2)).sum::<f64>() / e.len() as f64;
        assert!((re - 0.5).abs() < 0.01 && (im - 0.5).abs() < 0.01, "{re} {im}");
    }
}
