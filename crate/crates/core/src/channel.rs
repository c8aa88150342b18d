//! Random channel generation for the BS → IRS → user links and the direct BS → user link.
//!
//! The BS sits at the origin and the IRS at `(bs_irs_distance, 0)`. Users are
//! dropped on the segment between them, offset vertically by
//! `user_height_offset`. The BS–IRS and IRS–user links are Rician with a
//! uniform-linear-array LoS term; the direct link is Rayleigh. Every link is
//! scaled by a log-distance path loss.

use std::f64::consts::PI;

use nalgebra::allocator::Allocator;
use nalgebra::{DMatrix, DVector, DefaultAllocator, Dim, OMatrix};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Placement of BS, IRS and users, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGeometry {
    pub bs_irs_distance: f64,
    pub user_height_offset: f64,
    /// Users are placed uniformly with x in `[user_min_x, user_max_x]`.
    pub user_min_x: f64,
    pub user_max_x: f64,
    /// Element spacing over carrier wavelength, d/λ.
    pub spacing_ratio: f64,
}

impl Default for SystemGeometry {
    fn default() -> Self {
        Self {
            bs_irs_distance: 51.0,
            user_height_offset: 2.0,
            user_min_x: 10.0,
            user_max_x: 41.0,
            spacing_ratio: 0.5,
        }
    }
}

impl SystemGeometry {
    pub fn validate(&self) -> Result<()> {
        positive("bs_irs_distance", self.bs_irs_distance)?;
        positive("user_height_offset", self.user_height_offset)?;
        positive("user_min_x", self.user_min_x)?;
        positive("spacing_ratio", self.spacing_ratio)?;
        if !(self.user_max_x >= self.user_min_x) {
            return Err(Error::config("user_max_x", "must be >= user_min_x"));
        }
        if self.user_max_x >= self.bs_irs_distance {
            return Err(Error::config(
                "user_max_x",
                "users must lie strictly between the BS and the IRS",
            ));
        }
        Ok(())
    }

    pub fn bs_user_distance(&self, user_x: f64) -> f64 {
        user_x.hypot(self.user_height_offset)
    }

    pub fn irs_user_distance(&self, user_x: f64) -> f64 {
        (self.bs_irs_distance - user_x).hypot(self.user_height_offset)
    }
}

/// Log-distance path loss: gain = 10^(-reference_db/10) · d^(-exponent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub reference_db: f64,
    pub exponent_bs_irs: f64,
    pub exponent_irs_user: f64,
    pub exponent_direct: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            reference_db: 30.0,
            exponent_bs_irs: 2.2,
            exponent_irs_user: 2.2,
            exponent_direct: 3.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub num_bs_antennas: usize,
    pub num_irs_elements: usize,
    pub num_users: usize,
    pub rician_k1: f64,
    pub rician_k2: f64,
    /// `None` leaves every link at unit average gain.
    pub pathloss: Option<PathLossModel>,
    /// Receiver noise power σ² in watts, shared by all users.
    pub noise_variance: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            num_bs_antennas: 4,
            num_irs_elements: 4,
            num_users: 4,
            rician_k1: 10.0,
            rician_k2: 10.0,
            pathloss: Some(PathLossModel::default()),
            noise_variance: dbm_to_watts(-80.0),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        at_least_one("num_bs_antennas", self.num_bs_antennas)?;
        at_least_one("num_irs_elements", self.num_irs_elements)?;
        at_least_one("num_users", self.num_users)?;
        non_negative("rician_k1", self.rician_k1)?;
        non_negative("rician_k2", self.rician_k2)?;
        positive("noise_variance", self.noise_variance)?;
        if let Some(pl) = &self.pathloss {
            finite("reference_pathloss_db", pl.reference_db)?;
            non_negative("pathloss_exponent_bs_irs", pl.exponent_bs_irs)?;
            non_negative("pathloss_exponent_irs_user", pl.exponent_irs_user)?;
            non_negative("pathloss_exponent_direct", pl.exponent_direct)?;
        }
        Ok(())
    }
}

/// One draw of every channel in the system, path loss included.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS → IRS, N × M.
    pub h1: CMatrix,
    /// IRS → user k, length N each.
    pub h_r: Vec<CVector>,
    /// BS → user k, length M each.
    pub h_d: Vec<CVector>,
    /// (x, y) of each user in meters.
    pub user_positions: Vec<(f64, f64)>,
}

impl ChannelRealization {
    pub fn num_bs_antennas(&self) -> usize {
        self.h1.ncols()
    }

    pub fn num_irs_elements(&self) -> usize {
        self.h1.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.h_d.len()
    }

    /// All-zero channels with the given dimensions.
    pub fn zeros(m: usize, n: usize, k: usize) -> Self {
        Self {
            h1: CMatrix::zeros(n, m),
            h_r: vec![CVector::zeros(n); k],
            h_d: vec![CVector::zeros(m); k],
            user_positions: vec![(0.0, 0.0); k],
        }
    }

    pub fn is_finite(&self) -> bool {
        let ok = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        self.h1.iter().all(ok)
            && self.h_r.iter().all(|v| v.iter().all(ok))
            && self.h_d.iter().all(|v| v.iter().all(ok))
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// ULA response: element i is exp(j·2π·ratio·i·sin θ).
pub fn steering_vector(theta: f64, n: usize, spacing_ratio: f64) -> Result<CVector> {
    if n == 0 {
        return Err(Error::Dimension {
            context: "steering_vector length",
            expected: 1,
            actual: 0,
        });
    }
    let step = 2.0 * PI * spacing_ratio * theta.sin();
    Ok(CVector::from_fn(n, |i, _| {
        Complex64::from_polar(1.0, step * i as f64)
    }))
}

/// Rank-one BS–IRS LoS matrix a_N(θ_aoa)ᴴ a_M(θ_aod), shape N × M.
pub fn los_bs_irs(
    theta_aoa: f64,
    theta_aod: f64,
    n: usize,
    m: usize,
    spacing_ratio: f64,
) -> Result<CMatrix> {
    let arrival = steering_vector(theta_aoa, n, spacing_ratio)?;
    let departure = steering_vector(theta_aod, m, spacing_ratio)?;
    Ok(CMatrix::from_fn(n, m, |i, j| {
        arrival[i].conj() * departure[j]
    }))
}

pub fn los_irs_user(theta_aod: f64, n: usize, spacing_ratio: f64) -> Result<CVector> {
    steering_vector(theta_aod, n, spacing_ratio)
}

/// Standard circularly symmetric complex Gaussian, E|z|² = 1.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician mixing weights (LoS, scattered) for factor `k`; squares sum to one.
pub fn rician_weights(k_factor: f64) -> Result<(f64, f64)> {
    if !(k_factor >= 0.0) {
        return Err(Error::Domain(format!(
            "Rician K-factor must be >= 0, got {k_factor}"
        )));
    }
    if k_factor.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let los = (k_factor / (k_factor + 1.0)).sqrt();
    let nlos = (1.0 / (k_factor + 1.0)).sqrt();
    debug_assert!((los * los + nlos * nlos - 1.0).abs() < 1e-12);
    Ok((los, nlos))
}

/// sqrt(K/(K+1))·los + sqrt(1/(K+1))·W with W i.i.d. CN(0, 1).
pub fn sample_rician<R, Rows, Cols>(
    k_factor: f64,
    los: &OMatrix<Complex64, Rows, Cols>,
    rng: &mut R,
) -> Result<OMatrix<Complex64, Rows, Cols>>
where
    R: Rng + ?Sized,
    Rows: Dim,
    Cols: Dim,
    DefaultAllocator: Allocator<Rows, Cols>,
{
    let (a, b) = rician_weights(k_factor)?;
    Ok(los.map(|l| l * a + complex_gaussian(rng) * b))
}

/// Rayleigh-faded direct channel with i.i.d. CN(0, 1) entries.
pub fn sample_direct<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVector {
    CVector::from_fn(m, |_, _| complex_gaussian(rng))
}

pub fn pathloss_amplitude(distance: f64, exponent: f64, reference_db: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "link distance must be > 0, got {distance}"
        )));
    }
    Ok((10f64.powf(-reference_db / 10.0) * distance.powf(-exponent)).sqrt())
}

pub fn apply_pathloss<Rows, Cols>(
    channel: &OMatrix<Complex64, Rows, Cols>,
    distance: f64,
    exponent: f64,
    reference_db: f64,
) -> Result<OMatrix<Complex64, Rows, Cols>>
where
    Rows: Dim,
    Cols: Dim,
    DefaultAllocator: Allocator<Rows, Cols>,
{
    let scale = pathloss_amplitude(distance, exponent, reference_db)?;
    Ok(channel.map(|z| z * scale))
}

/// Draws user positions, angles and small-scale fading for one coherence block.
pub fn sample_realization<R: Rng + ?Sized>(
    config: &ChannelConfig,
    geometry: &SystemGeometry,
    rng: &mut R,
) -> Result<ChannelRealization> {
    config.validate()?;
    geometry.validate()?;
    let (m, n, k) = (
        config.num_bs_antennas,
        config.num_irs_elements,
        config.num_users,
    );
    let ratio = geometry.spacing_ratio;
    let scale = |ch: CMatrix, d: f64, exponent: fn(&PathLossModel) -> f64| -> Result<CMatrix> {
        match &config.pathloss {
            Some(pl) => apply_pathloss(&ch, d, exponent(pl), pl.reference_db),
            None => Ok(ch),
        }
    };
    let scale_vec = |ch: CVector, d: f64, exponent: fn(&PathLossModel) -> f64| -> Result<CVector> {
        match &config.pathloss {
            Some(pl) => apply_pathloss(&ch, d, exponent(pl), pl.reference_db),
            None => Ok(ch),
        }
    };

    let theta_aoa = rng.gen_range(0.0..2.0 * PI);
    let theta_aod = rng.gen_range(0.0..2.0 * PI);
    let h1_los = los_bs_irs(theta_aoa, theta_aod, n, m, ratio)?;
    let h1 = sample_rician(config.rician_k1, &h1_los, rng)?;
    let h1 = scale(h1, geometry.bs_irs_distance, |pl| pl.exponent_bs_irs)?;

    let mut h_r = Vec::with_capacity(k);
    let mut h_d = Vec::with_capacity(k);
    let mut user_positions = Vec::with_capacity(k);
    for _ in 0..k {
        let x = rng.gen_range(geometry.user_min_x..=geometry.user_max_x);
        user_positions.push((x, geometry.user_height_offset));

        let theta_user = rng.gen_range(0.0..2.0 * PI);
        let los = los_irs_user(theta_user, n, ratio)?;
        let reflected = sample_rician(config.rician_k2, &los, rng)?;
        h_r.push(scale_vec(reflected, geometry.irs_user_distance(x), |pl| {
            pl.exponent_irs_user
        })?);

        let direct = sample_direct(m, rng);
        h_d.push(scale_vec(direct, geometry.bs_user_distance(x), |pl| {
            pl.exponent_direct
        })?);
    }

    Ok(ChannelRealization {
        h1,
        h_r,
        h_d,
        user_positions,
    })
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be > 0, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be >= 0, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite, got {v}")))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::config(field, "must be >= 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_cvec(v: &CVector, expected: &[Complex64]) {
        assert_eq!(v.len(), expected.len());
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12, "{a} != {b}");
        }
    }

    const ONE: Complex64 = Complex64::new(1.0, 0.0);
    const J: Complex64 = Complex64::new(0.0, 1.0);

    #[test]
    fn steering_vector_examples() {
        assert_cvec(&steering_vector(0.0, 4, 0.5).unwrap(), &[ONE; 4]);
        assert_cvec(&steering_vector(PI / 2.0, 2, 0.5).unwrap(), &[ONE, -ONE]);
        assert_cvec(&steering_vector(PI / 6.0, 3, 0.5).unwrap(), &[ONE, J, -ONE]);
        assert!(matches!(
            steering_vector(0.3, 0, 0.5),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn los_matrix_examples() {
        let m = los_bs_irs(0.0, 0.0, 2, 2, 0.5).unwrap();
        assert!(m.iter().all(|z| (z - ONE).norm() < 1e-12));

        let m = los_bs_irs(PI / 2.0, 0.0, 2, 2, 0.5).unwrap();
        assert!((m[(0, 0)] - ONE).norm() < 1e-12);
        assert!((m[(0, 1)] - ONE).norm() < 1e-12);
        assert!((m[(1, 0)] + ONE).norm() < 1e-12);
        assert!((m[(1, 1)] + ONE).norm() < 1e-12);
    }

    #[test]
    fn los_irs_user_delegates() {
        assert_cvec(&los_irs_user(0.0, 4, 0.5).unwrap(), &[ONE; 4]);
        assert_cvec(&los_irs_user(PI / 2.0, 2, 0.5).unwrap(), &[ONE, -ONE]);
        let a = los_irs_user(1.234, 7, 0.5).unwrap();
        let b = steering_vector(1.234, 7, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rician_rejects_negative_k() {
        let los = CVector::from_element(3, ONE);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_rician(-1.0, &los, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rician_weights_square_sum_to_one() {
        for k in [0.0, 1e-6, 0.5, 1.0, 10.0, 1e3, 1e12] {
            let (a, b) = rician_weights(k).unwrap();
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rician_large_k_approaches_los() {
        let los = steering_vector(0.7, 8, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let out = sample_rician(1e12, &los, &mut rng).unwrap();
        let dev = out
            .iter()
            .zip(los.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-5, "max deviation {dev}");
    }

    #[test]
    fn pathloss_examples() {
        let x = CVector::from_vec(vec![Complex64::new(3.0, -4.0), ONE]);
        let same = apply_pathloss(&x, 1.0, 3.7, 0.0).unwrap();
        assert_eq!(same, x);

        let scaled = apply_pathloss(&x, 10.0, 2.0, 0.0).unwrap();
        for (a, b) in scaled.iter().zip(x.iter()) {
            assert_relative_eq!(a.re, 0.1 * b.re, max_relative = 1e-14);
            assert_relative_eq!(a.im, 0.1 * b.im, max_relative = 1e-14);
        }

        let amp = pathloss_amplitude(51.0, 2.2, 30.0).unwrap();
        assert_relative_eq!(amp, (1e-3 * 51f64.powf(-2.2)).sqrt(), max_relative = 1e-14);

        assert!(matches!(
            apply_pathloss(&x, 0.0, 2.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            apply_pathloss(&x, -3.0, 2.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn realization_shapes_and_determinism() {
        let config = ChannelConfig {
            num_bs_antennas: 3,
            num_irs_elements: 5,
            num_users: 2,
            ..Default::default()
        };
        let geometry = SystemGeometry::default();
        let a = sample_realization(&config, &geometry, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_realization(&config, &geometry, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.h1.shape(), (5, 3));
        assert_eq!(a.h_r.len(), 2);
        assert_eq!(a.h_d.len(), 2);
        assert!(a.h_r.iter().all(|v| v.len() == 5));
        assert!(a.h_d.iter().all(|v| v.len() == 3));
        assert!(a.is_finite());
        for &(x, y) in &a.user_positions {
            assert!((10.0..=41.0).contains(&x));
            assert_eq!(y, 2.0);
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let config = ChannelConfig {
            num_users: 0,
            ..Default::default()
        };
        let err = sample_realization(
            &config,
            &SystemGeometry::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("num_users"), "{err}");
    }
}
