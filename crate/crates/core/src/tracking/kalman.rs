use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position-extraction matrix H.
pub const MEASUREMENT_MATRIX: Matrix2x4<f64> =
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);

/// Planar constant-velocity state `[x, y, vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KinematicState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl KinematicState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.vx, self.vy)
    }
}

/// Gaussian belief over a target's kinematic state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackBelief {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub last_update: f64,
    pub track_id: u64,
}

impl TrackBelief {
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>, last_update: f64, track_id: u64) -> Self {
        Self {
            mean,
            cov,
            last_update,
            track_id,
        }
    }

    pub fn state(&self) -> KinematicState {
        KinematicState::from_vector(&self.mean)
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }

    pub fn position_cov(&self) -> Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorSource {
    Ais,
    Lidar,
}

/// Position measurement `z = H x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub source: SensorSource,
    pub z: Vector2<f64>,
    pub r: Matrix2<f64>,
    pub stamp: f64,
    /// Reported identity (AIS only).
    pub vessel_id: Option<u32>,
}

impl Measurement {
    pub fn new(source: SensorSource, z: Vector2<f64>, r: Matrix2<f64>, stamp: f64) -> Self {
        Self {
            source,
            z,
            r,
            stamp,
            vessel_id: None,
        }
    }
}

/// White-noise-acceleration process noise with spectral density `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Acceleration spectral density [m²/s³].
    pub q: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { q: 0.05 }
    }
}

impl NoiseModel {
    pub fn matrix(&self, dt: f64) -> Matrix4<f64> {
        let q = self.q;
        let (a, b, c) = (dt.powi(3) / 3.0 * q, dt * dt / 2.0 * q, dt * q);
        Matrix4::new(
            a, 0.0, b, 0.0, //
            0.0, a, 0.0, b, //
            b, 0.0, c, 0.0, //
            0.0, b, 0.0, c,
        )
    }
}

pub fn cv_transition(dt: f64) -> Matrix4<f64> {
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    a
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// x̌ = A x, P̌ = A P Aᵀ + Q.
pub fn kf_predict(belief: &TrackBelief, dt: f64, noise: &NoiseModel) -> TrackBelief {
    debug_assert!(dt >= 0.0);
    let a = cv_transition(dt);
    TrackBelief {
        mean: a * belief.mean,
        cov: symmetrize(&(a * belief.cov * a.transpose() + noise.matrix(dt))),
        last_update: belief.last_update + dt,
        track_id: belief.track_id,
    }
}

/// Correction step returning the posterior and the Kalman gain.
pub fn kf_update_with_gain(
    prior: &TrackBelief,
    m: &Measurement,
) -> Result<(TrackBelief, Matrix4x2<f64>)> {
    let h = MEASUREMENT_MATRIX;
    let innovation = m.z - h * prior.mean;
    let s = h * prior.cov * h.transpose() + m.r;
    let s_inv = s
        .try_inverse()
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or(Error::UpdateSingular)?;
    let k = prior.cov * h.transpose() * s_inv;
    let ikh = Matrix4::identity() - k * h;
    let cov = ikh * prior.cov * ikh.transpose() + k * m.r * k.transpose();
    Ok((
        TrackBelief {
            mean: prior.mean + k * innovation,
            cov: symmetrize(&cov),
            last_update: prior.last_update,
            track_id: prior.track_id,
        },
        k,
    ))
}

pub fn kf_update(prior: &TrackBelief, m: &Measurement) -> Result<TrackBelief> {
    kf_update_with_gain(prior, m).map(|(b, _)| b)
}

/// Product of the prior with whichever measurement densities are present.
///
/// With both sources the two position likelihoods are multiplied first,
/// `R = (R_L⁻¹ + R_A⁻¹)⁻¹`, `z = R (R_L⁻¹ z_L + R_A⁻¹ z_A)`, and the result is
/// applied as one update; this is algebraically equal to sequential updates
/// in either order.
pub fn fuse_gaussian_product(
    prior: &TrackBelief,
    lidar: Option<&Measurement>,
    ais: Option<&Measurement>,
) -> Result<TrackBelief> {
    match (lidar, ais) {
        (None, None) => Ok(prior.clone()),
        (Some(m), None) | (None, Some(m)) => kf_update(prior, m),
        (Some(l), Some(a)) => {
            let li = l.r.try_inverse().ok_or(Error::UpdateSingular)?;
            let ai = a.r.try_inverse().ok_or(Error::UpdateSingular)?;
            let r = (li + ai).try_inverse().ok_or(Error::UpdateSingular)?;
            let r = (r + r.transpose()) * 0.5;
            let z = r * (li * l.z + ai * a.z);
            let fused = Measurement {
                source: SensorSource::Lidar,
                z,
                r,
                stamp: l.stamp.max(a.stamp),
                vessel_id: a.vessel_id,
            };
            kf_update(prior, &fused)
        }
    }
}

/// Gain-weighted combination of two posteriors on the position block of the
/// gains: `W_AIS = K_L (K_A + K_L)⁻¹`, `W_L = K_A (K_A + K_L)⁻¹`. The same
/// 2×2 weights are applied to the position and the velocity sub-vectors.
pub fn fuse_gain_weighted(
    ais_post: &TrackBelief,
    k_ais: &Matrix4x2<f64>,
    lidar_post: &TrackBelief,
    k_lidar: &Matrix4x2<f64>,
) -> Result<(KinematicState, Matrix2<f64>, Matrix2<f64>)> {
    let ka = k_ais.fixed_view::<2, 2>(0, 0).into_owned();
    let kl = k_lidar.fixed_view::<2, 2>(0, 0).into_owned();
    let sum = ka + kl;
    if sum.determinant().abs() <= 1e-14 * sum.norm_squared().max(f64::MIN_POSITIVE) {
        return Err(Error::FusionSingular);
    }
    let inv = sum.try_inverse().ok_or(Error::FusionSingular)?;
    let w_ais = kl * inv;
    let w_lidar = ka * inv;
    let pos = w_ais * ais_post.position() + w_lidar * lidar_post.position();
    let va = Vector2::new(ais_post.mean[2], ais_post.mean[3]);
    let vl = Vector2::new(lidar_post.mean[2], lidar_post.mean[3]);
    let vel = w_ais * va + w_lidar * vl;
    Ok((
        KinematicState::new(pos[0], pos[1], vel[0], vel[1]),
        w_ais,
        w_lidar,
    ))
}

/// Repeated prediction without updates: entries k = 1..=steps.
pub fn predict_horizon(
    belief: &TrackBelief,
    steps: usize,
    dt: f64,
    noise: &NoiseModel,
) -> Vec<(Vector4<f64>, Matrix4<f64>)> {
    let mut out = Vec::with_capacity(steps);
    let mut b = belief.clone();
    for _ in 0..steps {
        b = kf_predict(&b, dt, noise);
        out.push((b.mean, b.cov));
    }
    out
}

/// Largest positional standard deviation of a covariance.
pub fn position_sigma(cov: &Matrix4<f64>) -> f64 {
    let p = cov.fixed_view::<2, 2>(0, 0);
    let (a, b, c) = (p[(0, 0)], 0.5 * (p[(0, 1)] + p[(1, 0)]), p[(1, 1)]);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mid + rad).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn belief(mean: [f64; 4], var: f64) -> TrackBelief {
        TrackBelief::new(Vector4::from(mean), Matrix4::identity() * var, 0.0, 1)
    }

    fn lidar(z: [f64; 2], var: f64) -> Measurement {
        Measurement::new(
            SensorSource::Lidar,
            Vector2::from(z),
            Matrix2::identity() * var,
            0.0,
        )
    }

    #[test]
    fn transition_examples() {
        assert_eq!(cv_transition(0.0), Matrix4::identity());
        let x = cv_transition(1.0) * Vector4::new(0.0, 0.0, 2.0, -1.0);
        assert_eq!(x, Vector4::new(2.0, -1.0, 2.0, -1.0));
        let ab = cv_transition(0.7) * cv_transition(1.6);
        assert!((ab - cv_transition(2.3)).amax() < 1e-15);
    }

    #[test]
    fn noiseless_predict() {
        let b = belief([0.0, 0.0, 1.0, 0.0], 2.0);
        let p = kf_predict(&b, 1.0, &NoiseModel { q: 0.0 });
        assert_eq!(p.position(), Vector2::new(1.0, 0.0));
        let a = cv_transition(1.0);
        assert!((p.cov - a * b.cov * a.transpose()).amax() < 1e-15);
        assert_eq!(p.last_update, 1.0);
    }

    #[test]
    fn small_steps_compose_to_one_big_step() {
        let b = belief([1.0, 2.0, 0.5, -0.3], 0.7);
        let noise = NoiseModel::default();
        let mut s = b.clone();
        for _ in 0..10 {
            s = kf_predict(&s, 0.25, &noise);
        }
        let big = kf_predict(&b, 2.5, &noise);
        assert!((s.mean - big.mean).amax() < 1e-12);
        assert!((s.cov - big.cov).amax() < 1e-12);
    }

    #[test]
    fn uninformative_measurement_leaves_prior() {
        let b = belief([1.0, 2.0, 0.5, -0.3], 3.0);
        let post = kf_update(&b, &lidar([50.0, -40.0], 1e12)).unwrap();
        assert!((post.mean - b.mean).amax() < 1e-6 * 50.0);
        assert!(((post.cov - b.cov).amax() / 3.0) < 1e-6);
    }

    #[test]
    fn uninformative_prior_takes_measurement() {
        let b = belief([0.0, 0.0, 0.0, 0.0], 1e12);
        let post = kf_update(&b, &lidar([3.0, -4.0], 1.0)).unwrap();
        assert!((post.position() - Vector2::new(3.0, -4.0)).amax() < 1e-9);
    }

    #[test]
    fn update_shrinks_position_variance() {
        let b = belief([0.0, 0.0, 1.0, 1.0], 4.0);
        let post = kf_update(&b, &lidar([1.0, 1.0], 2.0)).unwrap();
        assert!(post.cov[(0, 0)] <= b.cov[(0, 0)] + 1e-12);
        assert!(post.cov[(1, 1)] <= b.cov[(1, 1)] + 1e-12);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let b = belief([0.0; 4], 0.0);
        let m = lidar([0.0, 0.0], 0.0);
        assert!(matches!(kf_update(&b, &m), Err(Error::UpdateSingular)));
    }

    #[test]
    fn fusion_cases() {
        let b = belief([1.0, 1.0, 0.0, 0.0], 2.0);
        assert_eq!(fuse_gaussian_product(&b, None, None).unwrap(), b);
        let l = lidar([2.0, 0.5], 1.0);
        assert_eq!(
            fuse_gaussian_product(&b, Some(&l), None).unwrap(),
            kf_update(&b, &l).unwrap()
        );

        let flat = belief([0.0; 4], 1e12);
        let z = lidar([5.0, 5.0], 3.0);
        let two = fuse_gaussian_product(&flat, Some(&z), Some(&z)).unwrap();
        assert!((two.position_cov() - Matrix2::identity() * 1.5).amax() < 1e-6);
    }

    #[test]
    fn equal_gains_average() {
        let a = belief([0.0, 2.0, 1.0, 0.0], 1.0);
        let l = belief([2.0, 4.0, 3.0, 2.0], 1.0);
        let k = Matrix4x2::new(0.5, 0.1, 0.1, 0.4, 0.2, 0.0, 0.0, 0.2);
        let (x, wa, wl) = fuse_gain_weighted(&a, &k, &l, &k).unwrap();
        assert!((x.to_vector() - Vector4::new(1.0, 3.0, 2.0, 1.0)).amax() < 1e-12);
        assert!((wa + wl - Matrix2::identity()).amax() < 1e-12);
        assert!(matches!(
            fuse_gain_weighted(&a, &Matrix4x2::zeros(), &l, &Matrix4x2::zeros()),
            Err(Error::FusionSingular)
        ));
    }

    #[test]
    fn sigma_of_diagonal_cov() {
        let mut p = Matrix4::identity();
        p[(0, 0)] = 9.0;
        p[(1, 1)] = 4.0;
        assert!((position_sigma(&p) - 3.0).abs() < 1e-15);
    }
}
