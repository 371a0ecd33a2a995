//! Rational-ratio windowed-sinc resampler.
//!
//! Each output sample is a dot product with a Kaiser-windowed sinc kernel
//! evaluated at its fractional input position. The kernel spans 32 zero
//! crossings on either side of the cutoff, i.e. 64 taps per polyphase branch
//! when upsampling and proportionally more input taps when decimating.

use std::f64::consts::PI;

const ZERO_CROSSINGS: usize = 32;
const KAISER_BETA: f64 = 8.0;
/// Cutoff as a fraction of the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.95;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resample `samples` from `from_hz` to `to_hz`. Output length is
/// `ceil(len * to / from)`.
pub fn resample(samples: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    assert!(from_hz > 0 && to_hz > 0, "sample rates must be positive");
    if from_hz == to_hz {
        return samples.to_vec();
    }
    let g = gcd(from_hz as u64, to_hz as u64);
    let (up, down) = ((to_hz as u64 / g) as usize, (from_hz as u64 / g) as usize);
    // cutoff relative to the input Nyquist
    let ratio = (up as f64 / down as f64).min(1.0);
    let fc = ratio * ROLLOFF;
    let half = (ZERO_CROSSINGS as f64 / ratio).ceil() as isize;
    let i0_beta = bessel_i0(KAISER_BETA);

    // one normalised kernel per output phase
    let tables: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            let mut taps: Vec<f64> = (-half + 1..=half)
                .map(|k| {
                    let tau = frac - k as f64;
                    let r = tau / half as f64;
                    let w = if r.abs() >= 1.0 { 0.0 } else { bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta };
                    fc * sinc(fc * tau) * w
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            taps
        })
        .collect();

    let out_len = (samples.len() as u64 * up as u64).div_ceil(down as u64) as usize;
    let n = samples.len() as isize;
    (0..out_len)
        .map(|m| {
            let pos = m * down;
            let base = (pos / up) as isize;
            let taps = &tables[pos % up];
            let mut acc = 0.0;
            for (j, &h) in taps.iter().enumerate() {
                let idx = base - half + 1 + j as isize;
                if (0..n).contains(&idx) {
                    acc += h * samples[idx as usize];
                }
            }
            acc
        })
        .collect()
}
