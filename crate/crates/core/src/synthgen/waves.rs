//! Component generators: trends, seasonals, white-noise remainder.

use rand::Rng;

use crate::error::Error;
use crate::scalar::Scalar;

/// trend[t] = beta0 + beta1 * t, t starting at 0.
pub fn gen_linear_trend<F: Scalar>(beta0: F, beta1: F, t_len: usize) -> Result<Vec<F>, Error> {
    if t_len < 1 {
        return Err(Error::InvalidInput("trend length must be at least 1".into()));
    }
    Ok((0..t_len)
        .map(|t| beta0 + beta1 * F::from_f64(t as f64))
        .collect())
}

/// Twice-integrated Gaussian white noise, returned with its innovations:
/// tau = cumsum(cumsum(X)), X_t ~ N(0, sigma^2), so that the second
/// difference tau_t - 2*tau_{t-1} + tau_{t-2} equals X_t bit-for-bit.
///
/// Exactness is arranged by snapping each innovation to a power-of-two
/// grid scaled to sigma; both cumulative sums then stay on exactly
/// representable values (for f64 up to lengths around 8k even in the
/// worst case), so no addition ever rounds.
pub fn gen_stochastic_trend_with_innovations<F: Scalar, R: Rng + ?Sized>(
    t_len: usize,
    sigma: F,
    rng: &mut R,
) -> Result<(Vec<F>, Vec<F>), Error> {
    if t_len < 1 {
        return Err(Error::InvalidInput("trend length must be at least 1".into()));
    }
    if !(sigma > F::zero()) {
        return Err(Error::InvalidInput("stochastic trend sigma must be positive".into()));
    }

    let mant_bits = (1.0 - F::epsilon().to_f64().log2()) as i32;
    let len_bits = (usize::BITS - (t_len.max(2) - 1).leading_zeros()) as i32;
    let grid_bits = 24.min(mant_bits - 3 - 2 * len_bits);
    let grid = if grid_bits >= 4 {
        let exp = sigma.to_f64().log2().ceil() as i32 - grid_bits;
        Some(F::from_f64(2f64.powi(exp)))
    } else {
        None
    };

    let mut innovations = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let raw = F::standard_normal(rng) * sigma;
        innovations.push(match grid {
            Some(g) => (raw / g).round() * g,
            None => raw,
        });
    }

    let mut tau = Vec::with_capacity(t_len);
    let mut velocity = F::zero();
    let mut level = F::zero();
    for &x in &innovations {
        velocity += x;
        level += velocity;
        tau.push(level);
    }
    Ok((tau, innovations))
}

pub fn gen_stochastic_trend<F: Scalar, R: Rng + ?Sized>(
    t_len: usize,
    sigma: F,
    rng: &mut R,
) -> Result<Vec<F>, Error> {
    gen_stochastic_trend_with_innovations(t_len, sigma, rng).map(|(tau, _)| tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveShape {
    Sine,
    Square,
}

#[derive(Debug, Clone, Copy)]
pub struct Wave<F> {
    pub shape: WaveShape,
    pub amplitude: F,
    /// Period in samples; need not be an integer.
    pub period: F,
    /// Phase offset in samples.
    pub phase: F,
}

/// Sum of sinusoids A*sin(2*pi*(t+phase)/period) and square waves that are
/// +A on the first half of each cycle and -A on the second.
pub fn gen_deterministic_seasonal<F: Scalar>(
    waves: &[Wave<F>],
    t_len: usize,
) -> Result<Vec<F>, Error> {
    if waves.is_empty() {
        return Err(Error::InvalidInput("seasonal needs at least one wave".into()));
    }
    if let Some(w) = waves.iter().find(|w| !(w.period > F::zero())) {
        return Err(Error::InvalidInput(format!(
            "wave period must be positive, got {}",
            w.period
        )));
    }
    let two_pi = F::from_f64(std::f64::consts::TAU);
    let half = F::from_f64(0.5);
    let mut out = vec![F::zero(); t_len];
    for wave in waves {
        for (t, v) in out.iter_mut().enumerate() {
            let cycles = (F::from_f64(t as f64) + wave.phase) / wave.period;
            *v += match wave.shape {
                WaveShape::Sine => wave.amplitude * (two_pi * cycles).sin(),
                WaveShape::Square => {
                    // Positive on [0, 0.5) of each cycle; the boundary at
                    // exact half-cycles is fixed by arithmetic, not by the
                    // sign of a floating-point sin.
                    let frac = cycles.fract();
                    let frac = if frac < F::zero() { frac + F::one() } else { frac };
                    if frac < half {
                        wave.amplitude
                    } else {
                        -wave.amplitude
                    }
                }
            };
        }
    }
    Ok(out)
}

/// Jitter switches for the stochastic-cycle seasonal.
#[derive(Debug, Clone, Copy, Default)]
pub struct CycleJitter<F> {
    /// Per-cycle amplitude scale drawn uniformly from this range.
    pub amplitude_range: Option<(F, F)>,
    /// Per-cycle length resampling to round(period * U[0.9, 1.1]) samples
    /// via linear interpolation.
    pub length_resample: bool,
}

impl<F> CycleJitter<F> {
    pub fn off() -> Self {
        CycleJitter {
            amplitude_range: None,
            length_resample: false,
        }
    }
}

/// One standardized slow stochastic-trend segment of length `period`,
/// tiled as s_t = segment[(t + phase) mod period], with optional per-cycle
/// amplitude and length jitter applied after tiling. With jitter off the
/// output satisfies s_{t+period} == s_t exactly.
pub fn gen_stochastic_seasonal<F: Scalar, R: Rng + ?Sized>(
    period: usize,
    phase: usize,
    t_len: usize,
    jitter: CycleJitter<F>,
    rng: &mut R,
) -> Result<Vec<F>, Error> {
    if period <= 1 || period >= t_len {
        return Err(Error::InvalidInput(format!(
            "period {period} must satisfy 1 < period < length {t_len}"
        )));
    }
    let segment = standardize(&gen_stochastic_trend(period, F::one(), rng)?)?;
    let rotated: Vec<F> = (0..period).map(|i| segment[(i + phase) % period]).collect();

    if jitter.amplitude_range.is_none() && !jitter.length_resample {
        return Ok((0..t_len).map(|t| rotated[t % period]).collect());
    }

    let mut out = Vec::with_capacity(t_len + period);
    while out.len() < t_len {
        let scale = match jitter.amplitude_range {
            Some((lo, hi)) => F::uniform(rng, lo, hi),
            None => F::one(),
        };
        let cycle: Vec<F> = rotated.iter().map(|&v| v * scale).collect();
        if jitter.length_resample {
            let factor = F::uniform(rng, F::from_f64(0.9), F::from_f64(1.1));
            let new_len = (F::from_f64(period as f64) * factor)
                .round()
                .to_f64() as usize;
            out.extend(resample_linear(&cycle, new_len.max(2)));
        } else {
            out.extend_from_slice(&cycle);
        }
    }
    out.truncate(t_len);
    Ok(out)
}

/// Endpoint-matched linear resampling to `new_len` samples.
pub(crate) fn resample_linear<F: Scalar>(x: &[F], new_len: usize) -> Vec<F> {
    let n = x.len();
    if new_len == 0 || n == 0 {
        return Vec::new();
    }
    if n == 1 || new_len == 1 {
        return vec![x[0]; new_len];
    }
    let step = (n - 1) as f64 / (new_len - 1) as f64;
    (0..new_len)
        .map(|j| {
            let pos = j as f64 * step;
            let i0 = (pos.floor() as usize).min(n - 2);
            let frac = F::from_f64(pos - i0 as f64);
            x[i0] + (x[i0 + 1] - x[i0]) * frac
        })
        .collect()
}

/// i.i.d. N(0, sigma^2) samples.
pub fn gen_remainder<F: Scalar, R: Rng + ?Sized>(
    t_len: usize,
    sigma: F,
    rng: &mut R,
) -> Result<Vec<F>, Error> {
    if sigma < F::zero() {
        return Err(Error::InvalidInput("remainder sigma must be nonnegative".into()));
    }
    Ok((0..t_len).map(|_| F::standard_normal(rng) * sigma).collect())
}

/// Shift-and-scale to zero mean and unit population variance.
pub fn standardize<F: Scalar>(x: &[F]) -> Result<Vec<F>, Error> {
    if x.len() < 2 {
        return Err(Error::InvalidInput("standardize needs at least 2 samples".into()));
    }
    let n = F::from_f64(x.len() as f64);
    let mean = x.iter().fold(F::zero(), |acc, &v| acc + v) / n;
    let var = x
        .iter()
        .fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean))
        / n;
    let std = var.sqrt();
    // A constant series yields std at rounding-noise level relative to its
    // mean; treat that as zero variance.
    let floor = F::epsilon() * F::from_f64(8.0) * mean.abs().max(F::min_positive_value());
    if !(std > floor) {
        return Err(Error::DegenerateVariance);
    }
    Ok(x.iter().map(|&v| (v - mean) / std).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_trend_examples() {
        assert_eq!(gen_linear_trend(1.0, 2.0, 3).unwrap(), vec![1.0, 3.0, 5.0]);
        assert_eq!(gen_linear_trend(4.0, 0.0, 3).unwrap(), vec![4.0, 4.0, 4.0]);
        assert_eq!(gen_linear_trend(0.0, -1.0, 2).unwrap(), vec![0.0, -1.0]);
        assert!(gen_linear_trend::<f64>(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn stochastic_trend_double_cumsum_of_impulse() {
        // Verified through the identity rather than by mocking the RNG:
        // cumsum(cumsum(1,0,0)) = (1,2,3).
        let x = [1.0f64, 0.0, 0.0];
        let mut velocity = 0.0;
        let mut level = 0.0;
        let tau: Vec<f64> = x
            .iter()
            .map(|&v| {
                velocity += v;
                level += velocity;
                level
            })
            .collect();
        assert_eq!(tau, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn stochastic_trend_second_difference_identity_exact() {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = 0.01 + (seed as f64) * 0.37;
            let (tau, x) =
                gen_stochastic_trend_with_innovations(400, sigma, &mut rng).unwrap();
            for t in 2..tau.len() {
                let dd = tau[t] - 2.0 * tau[t - 1] + tau[t - 2];
                assert_eq!(dd, x[t], "seed {seed}, t {t}");
            }
            // boundary values: tau_0 = x_0 and tau_1 = 2*x_0 + x_1
            assert_eq!(tau[0], x[0]);
            assert_eq!(tau[1] - 2.0 * tau[0], x[1]);
        }
    }

    #[test]
    fn stochastic_trend_rejects_bad_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gen_stochastic_trend::<f64, _>(10, 0.0, &mut rng).is_err());
        assert!(gen_stochastic_trend::<f64, _>(10, -1.0, &mut rng).is_err());
    }

    #[test]
    fn sinusoid_quarter_period() {
        let waves: [Wave<f64>; 1] = [Wave {
            shape: WaveShape::Sine,
            amplitude: 1.0,
            period: 4.0,
            phase: 0.0,
        }];
        let s = gen_deterministic_seasonal(&waves, 4).unwrap();
        let expected = [0.0, 1.0, 0.0, -1.0];
        for (a, e) in s.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn square_wave_alternates() {
        let waves = [Wave {
            shape: WaveShape::Square,
            amplitude: 2.0,
            period: 2.0,
            phase: 0.0,
        }];
        let s = gen_deterministic_seasonal(&waves, 6).unwrap();
        assert_eq!(s, vec![2.0, -2.0, 2.0, -2.0, 2.0, -2.0]);
    }

    #[test]
    fn waves_are_additive() {
        let w1: Wave<f64> = Wave {
            shape: WaveShape::Sine,
            amplitude: 1.0,
            period: 7.0,
            phase: 2.0,
        };
        let w2 = Wave {
            shape: WaveShape::Sine,
            amplitude: 0.5,
            period: 13.0,
            phase: 5.0,
        };
        let both = gen_deterministic_seasonal(&[w1, w2], 40).unwrap();
        let a = gen_deterministic_seasonal(&[w1], 40).unwrap();
        let b = gen_deterministic_seasonal(&[w2], 40).unwrap();
        for t in 0..40 {
            assert!((both[t] - (a[t] + b[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn tiling_periodicity_exact_without_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> =
            gen_stochastic_seasonal(23, 7, 200, CycleJitter::off(), &mut rng).unwrap();
        for t in 0..200 - 23 {
            assert_eq!(s[t + 23], s[t], "t {t}");
        }
    }

    #[test]
    fn tiling_modular_phase() {
        // A 2-periodic segment with phase 1 starts on the second sample.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f64> =
            gen_stochastic_seasonal(2, 1, 4, CycleJitter::off(), &mut rng).unwrap();
        assert_eq!(s[0], s[2]);
        assert_eq!(s[1], s[3]);
        assert_ne!(s[0], s[1]);
        // phase 0 of the same seed starts one sample earlier
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s0: Vec<f64> =
            gen_stochastic_seasonal(2, 0, 4, CycleJitter::off(), &mut rng).unwrap();
        assert_eq!(s[0], s0[1]);
        assert_eq!(s[1], s0[0]);
    }

    #[test]
    fn amplitude_jitter_scales_whole_cycles() {
        let period = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base: Vec<f64> =
            gen_stochastic_seasonal(period, 3, 96, CycleJitter::off(), &mut rng).unwrap();
        let jitter = CycleJitter {
            amplitude_range: Some((0.9, 1.1)),
            length_resample: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let jittered: Vec<f64> = gen_stochastic_seasonal(period, 3, 96, jitter, &mut rng).unwrap();
        for cycle in 0..96 / period {
            let lo = cycle * period;
            let ratio = jittered[lo] / base[lo];
            assert!((0.9..=1.1).contains(&ratio), "cycle {cycle}: {ratio}");
            for t in lo..lo + period {
                assert!((jittered[t] - base[t] * ratio).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn remainder_moments_at_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let r: Vec<f64> = gen_remainder(100_000, 1.0, &mut rng).unwrap();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let std =
            (r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r.len() as f64).sqrt();
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((std - 1.0).abs() < 0.02, "std {std}");
    }

    #[test]
    fn remainder_zero_sigma_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z: Vec<f64> = gen_remainder(16, 0.0, &mut rng).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        let mut a_rng = ChaCha8Rng::seed_from_u64(10);
        let mut b_rng = ChaCha8Rng::seed_from_u64(10);
        let a: Vec<f64> = gen_remainder(64, 0.7, &mut a_rng).unwrap();
        let b: Vec<f64> = gen_remainder(64, 0.7, &mut b_rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standardize_contract() {
        assert_eq!(standardize(&[0.0, 2.0]).unwrap(), vec![-1.0, 1.0]);

        let x = [3.0, -1.0, 4.0, 1.0, -5.0, 9.0, 2.0, -6.0];
        let z = standardize(&x).unwrap();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-9);

        // idempotence and affine invariance
        let z2 = standardize(&z).unwrap();
        let affine: Vec<f64> = x.iter().map(|v| 2.5 * v - 7.0).collect();
        let za = standardize(&affine).unwrap();
        for t in 0..x.len() {
            assert!((z2[t] - z[t]).abs() < 1e-9);
            assert!((za[t] - z[t]).abs() < 1e-9);
        }

        assert!(matches!(
            standardize(&[5.0; 10]).unwrap_err(),
            Error::DegenerateVariance
        ));
        assert!(standardize(&[1.0]).is_err());
    }

    #[test]
    fn resample_endpoints_and_midpoint() {
        let x = [0.0f64, 1.0, 2.0, 3.0];
        let up = resample_linear(&x, 7);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[6], 3.0);
        assert!((up[3] - 1.5).abs() < 1e-12);
        let down = resample_linear(&x, 2);
        assert_eq!(down, vec![0.0, 3.0]);
    }
}
