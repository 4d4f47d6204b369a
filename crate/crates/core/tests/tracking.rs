use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use proptest::prelude::*;

use seaguard::safety::ObstaclePrediction;
use seaguard::tracking::{
    fuse_gaussian_product, kf_predict, kf_update, position_sigma, predict_horizon, Measurement,
    NoiseModel, SensorSource, TrackBelief,
};

fn spd2() -> impl Strategy<Value = Matrix2<f64>> {
    (0.05..2.0f64, 0.05..2.0f64, -0.9..0.9f64).prop_map(|(sx, sy, rho)| {
        let c = rho * sx * sy;
        Matrix2::new(sx * sx, c, c, sy * sy)
    })
}

fn belief() -> impl Strategy<Value = TrackBelief> {
    (
        -50.0..50.0f64,
        -50.0..50.0f64,
        -2.0..2.0f64,
        -2.0..2.0f64,
        0.1..10.0f64,
        0.05..3.0f64,
    )
        .prop_map(|(x, y, vx, vy, pv, vv)| {
            TrackBelief::new(
                Vector4::new(x, y, vx, vy),
                Matrix4::from_diagonal(&Vector4::new(pv, pv, vv, vv)),
                0.0,
                7,
            )
        })
}

proptest! {
    #[test]
    fn product_fusion_is_order_free(prior in belief(), rl in spd2(), ra in spd2(), dz in (-3.0..3.0f64, -3.0..3.0f64)) {
        let z = prior.position() + Vector2::new(dz.0, dz.1);
        let l = Measurement::new(SensorSource::Lidar, z, rl, 0.0);
        let a = Measurement::new(SensorSource::Ais, z - Vector2::new(0.5, 0.5), ra, 0.0);
        let fused = fuse_gaussian_product(&prior, Some(&l), Some(&a)).unwrap();
        let seq = kf_update(&kf_update(&prior, &a).unwrap(), &l).unwrap();
        prop_assert!((fused.mean - seq.mean).amax() <= 1e-9 * fused.mean.amax().max(1.0));
        prop_assert!((fused.cov - seq.cov).amax() <= 1e-9 * fused.cov.amax());
    }

    #[test]
    fn prediction_keeps_covariance_symmetric_and_growing(prior in belief(), q in 0.001..1.0f64) {
        let noise = NoiseModel { q };
        let mut sigma = position_sigma(&prior.cov);
        for (_, cov) in predict_horizon(&prior, 50, 0.5, &noise) {
            prop_assert!((cov - cov.transpose()).amax() == 0.0);
            prop_assert!(cov.symmetric_eigenvalues().min() > 0.0);
            let next = position_sigma(&cov);
            prop_assert!(next > sigma);
            sigma = next;
        }
    }

    #[test]
    fn update_never_increases_position_uncertainty(prior in belief(), r in spd2()) {
        let m = Measurement::new(SensorSource::Lidar, prior.position(), r, 0.0);
        let post = kf_update(&prior, &m).unwrap();
        let drop = prior.position_cov() - post.position_cov();
        prop_assert!(drop.symmetric_eigenvalues().min() >= -1e-12);
    }
}

#[test]
fn inflated_forecast_follows_the_belief() {
    let noise = NoiseModel::default();
    let b = kf_predict(
        &TrackBelief::new(
            Vector4::new(10.0, 0.0, -1.0, 0.5),
            Matrix4::identity(),
            0.0,
            1,
        ),
        1.0,
        &noise,
    );
    let f = ObstaclePrediction::from_belief(&b, 4.0, 20, 0.5, &noise, 3.0);
    assert_eq!(f.positions.len(), 21);
    for k in 0..=20 {
        let t = 0.5 * k as f64;
        let expect = [b.mean[0] + b.mean[2] * t, b.mean[1] + b.mean[3] * t];
        assert!(
            (f.positions[k][0] - expect[0]).abs() < 1e-12
                && (f.positions[k][1] - expect[1]).abs() < 1e-12
        );
    }
    assert!(f.inflation.windows(2).all(|w| w[1] > w[0]));
    assert!((f.effective_radius(0) - (4.0 + 3.0 * position_sigma(&b.cov))).abs() < 1e-12);
}
