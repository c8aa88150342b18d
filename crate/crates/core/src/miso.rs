//! Downlink IRS-assisted MU-MISO link: effective channels, SINR and sum spectral efficiency.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::channel::{CMatrix, CVector, ChannelRealization};
use crate::error::{check_dim, Error, Result};

/// IRS configuration Φ = diag(e^{jθ_1}, …, e^{jθ_N}), stored as angles in [0, 2π).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShiftMatrix {
    phases: Vec<f64>,
}

impl PhaseShiftMatrix {
    pub fn from_phases(phases: impl IntoIterator<Item = f64>) -> Self {
        Self {
            phases: phases.into_iter().map(canonical_angle).collect(),
        }
    }

    /// Φ = I.
    pub fn identity(n: usize) -> Self {
        Self {
            phases: vec![0.0; n],
        }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Diagonal entry e^{jθ_i}.
    pub fn coefficient(&self, i: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.phases[i])
    }

    pub fn diagonal(&self) -> CVector {
        CVector::from_fn(self.len(), |i, _| self.coefficient(i))
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_diagonal(&self.diagonal())
    }
}

fn canonical_angle(theta: f64) -> f64 {
    let wrapped = theta.rem_euclid(TAU);
    // rem_euclid rounds tiny negative angles up to exactly 2π
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Transmit precoder G (M × K); column k serves user k.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingMatrix {
    g: CMatrix,
}

impl BeamformingMatrix {
    pub fn new(g: CMatrix) -> Self {
        Self { g }
    }

    pub fn zeros(m: usize, k: usize) -> Self {
        Self {
            g: CMatrix::zeros(m, k),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.g
    }

    pub fn num_antennas(&self) -> usize {
        self.g.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.g.ncols()
    }

    /// trace(G Gᴴ).
    pub fn total_power(&self) -> f64 {
        self.g.norm_squared()
    }

    /// ‖g_k‖².
    pub fn column_power(&self, k: usize) -> f64 {
        self.g.column(k).norm_squared()
    }
}

/// Scales `g_raw` so that trace(G Gᴴ) = pt. A zero matrix passes through unchanged.
pub fn project_power(g_raw: CMatrix, pt: f64) -> Result<BeamformingMatrix> {
    if !(pt > 0.0) {
        return Err(Error::Domain(format!("power budget must be > 0, got {pt}")));
    }
    let power = g_raw.norm_squared();
    if power == 0.0 {
        return Ok(BeamformingMatrix::new(g_raw));
    }
    let scale = (pt / power).sqrt();
    Ok(BeamformingMatrix::new(g_raw * Complex64::new(scale, 0.0)))
}

fn check_system(real: &ChannelRealization, phi: &PhaseShiftMatrix) -> Result<()> {
    check_dim("phase shift count", real.num_irs_elements(), phi.len())
}

fn check_precoder(real: &ChannelRealization, g: &BeamformingMatrix) -> Result<()> {
    check_dim("precoder rows", real.num_bs_antennas(), g.num_antennas())?;
    check_dim("precoder columns", real.num_users(), g.num_users())
}

/// h_{r,k}ᵀ Φ H1 + h_{d,k}ᵀ, returned as a length-M vector.
pub fn effective_channel(
    real: &ChannelRealization,
    phi: &PhaseShiftMatrix,
    k: usize,
) -> Result<CVector> {
    check_system(real, phi)?;
    if k >= real.num_users() {
        return Err(Error::Domain(format!(
            "user index {k} out of range for {} users",
            real.num_users()
        )));
    }
    let h_r = &real.h_r[k];
    let mut reflected = CVector::zeros(real.num_irs_elements());
    for i in 0..reflected.len() {
        reflected[i] = h_r[i] * phi.coefficient(i);
    }
    // (h_rᵀΦ H1)ᵀ = H1ᵀ (Φ h_r)
    Ok(real.h1.transpose() * reflected + &real.h_d[k])
}

pub fn effective_channels(
    real: &ChannelRealization,
    phi: &PhaseShiftMatrix,
) -> Result<Vec<CVector>> {
    (0..real.num_users())
        .map(|k| effective_channel(real, phi, k))
        .collect()
}

/// y_k = h̃_kᵀ G x + ω_k for every user.
pub fn received_signal(
    real: &ChannelRealization,
    phi: &PhaseShiftMatrix,
    g: &BeamformingMatrix,
    x: &CVector,
    noise: &CVector,
) -> Result<CVector> {
    check_precoder(real, g)?;
    check_dim("symbol vector", real.num_users(), x.len())?;
    check_dim("noise vector", real.num_users(), noise.len())?;
    let precoded = g.matrix() * x;
    let effective = effective_channels(real, phi)?;
    Ok(CVector::from_fn(real.num_users(), |k, _| {
        effective[k].dot(&precoded) + noise[k]
    }))
}

/// |h̃_kᵀ g_i|² for every i.
fn beam_gains(effective: &CVector, g: &BeamformingMatrix) -> Vec<f64> {
    (0..g.num_users())
        .map(|i| effective.dot(&g.matrix().column(i)).norm_sqr())
        .collect()
}

fn check_noise(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "noise variance must be > 0, got {sigma2}"
        )))
    }
}

/// SINR of user `k` given its effective channel.
pub fn sinr_from_effective(
    effective: &CVector,
    g: &BeamformingMatrix,
    k: usize,
    sigma2: f64,
) -> Result<f64> {
    check_noise(sigma2)?;
    check_dim("effective channel", g.num_antennas(), effective.len())?;
    if k >= g.num_users() {
        return Err(Error::Domain(format!("user index {k} out of range")));
    }
    let gains = beam_gains(effective, g);
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, p)| p)
        .sum();
    Ok(gains[k] / (interference + sigma2))
}

pub fn user_sinr(
    real: &ChannelRealization,
    phi: &PhaseShiftMatrix,
    g: &BeamformingMatrix,
    k: usize,
    sigma2: f64,
) -> Result<f64> {
    check_noise(sigma2)?;
    check_precoder(real, g)?;
    let effective = effective_channel(real, phi, k)?;
    sinr_from_effective(&effective, g, k, sigma2)
}

/// Σ_k log2(1 + SINR_k) from precomputed effective channels.
pub fn spectral_efficiency_from_effective(
    effective: &[CVector],
    g: &BeamformingMatrix,
    sigma2: f64,
) -> Result<f64> {
    check_dim("effective channel count", g.num_users(), effective.len())?;
    effective.iter().enumerate().try_fold(0.0, |acc, (k, h)| {
        Ok(acc + (1.0 + sinr_from_effective(h, g, k, sigma2)?).log2())
    })
}

/// Sum spectral efficiency in bits/s/Hz.
pub fn spectral_efficiency(
    real: &ChannelRealization,
    phi: &PhaseShiftMatrix,
    g: &BeamformingMatrix,
    sigma2: f64,
) -> Result<f64> {
    check_noise(sigma2)?;
    check_precoder(real, g)?;
    let effective = effective_channels(real, phi)?;
    spectral_efficiency_from_effective(&effective, g, sigma2)
}

/// Received signal power |h̃_kᵀ g_k|² of every user.
pub fn received_powers(
    real: &ChannelRealization,
    phi: &PhaseShiftMatrix,
    g: &BeamformingMatrix,
) -> Result<Vec<f64>> {
    check_precoder(real, g)?;
    let effective = effective_channels(real, phi)?;
    Ok(effective
        .iter()
        .enumerate()
        .map(|(k, h)| h.dot(&g.matrix().column(k)).norm_sqr())
        .collect())
}
