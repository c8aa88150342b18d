//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use irs_drl::channel::{CMatrix, CVector, ChannelRealization};
use num_complex::Complex64;
use rand::Rng;

pub fn random_complex<R: Rng>(rng: &mut R, scale: f64) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
}

/// Arbitrary channels whose entries span several orders of magnitude.
pub fn random_realization<R: Rng>(rng: &mut R, m: usize, n: usize, k: usize) -> ChannelRealization {
    let s1 = 10f64.powf(rng.gen_range(-3.0..0.0));
    let s2 = 10f64.powf(rng.gen_range(-3.0..0.0));
    let s3 = 10f64.powf(rng.gen_range(-4.0..0.0));
    ChannelRealization {
        h1: CMatrix::from_fn(n, m, |_, _| random_complex(rng, s1)),
        h_r: (0..k)
            .map(|_| CVector::from_fn(n, |_, _| random_complex(rng, s2)))
            .collect(),
        h_d: (0..k)
            .map(|_| CVector::from_fn(m, |_, _| random_complex(rng, s3)))
            .collect(),
        user_positions: vec![(0.0, 0.0); k],
    }
}

pub fn random_precoder<R: Rng>(rng: &mut R, m: usize, k: usize) -> CMatrix {
    CMatrix::from_fn(m, k, |_, _| random_complex(rng, 1.0))
}

/// Effective channel of user `k` with Φ and H1 expanded element by element.
pub fn effective_oracle(real: &ChannelRealization, phases: &[f64], k: usize) -> Vec<Complex64> {
    let (n, m) = (real.h1.nrows(), real.h1.ncols());
    (0..m)
        .map(|col| {
            let mut acc = real.h_d[k][col];
            for i in 0..n {
                for j in 0..n {
                    let phi_ij = if i == j {
                        Complex64::from_polar(1.0, phases[i])
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    acc += real.h_r[k][i] * phi_ij * real.h1[(j, col)];
                }
            }
            acc
        })
        .collect()
}

/// Sum of log2(1 + SINR_k) written out with scalar loops.
pub fn se_oracle(real: &ChannelRealization, phases: &[f64], g: &CMatrix, sigma2: f64) -> f64 {
    let (m, k_users) = (g.nrows(), g.ncols());
    let mut total = 0.0;
    for k in 0..k_users {
        let h = effective_oracle(real, phases, k);
        let gain = |i: usize| {
            let mut z = Complex64::new(0.0, 0.0);
            for row in 0..m {
                z += h[row] * g[(row, i)];
            }
            z.re * z.re + z.im * z.im
        };
        let mut interference = 0.0;
        for i in 0..k_users {
            if i != k {
                interference += gain(i);
            }
        }
        total += (1.0 + gain(k) / (interference + sigma2)).log2();
    }
    total
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Kolmogorov-Smirnov statistic of `samples` against a continuous CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
