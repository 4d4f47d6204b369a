use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix6, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::cluster::{PointCluster, MIN_FIT_POINTS};
use crate::error::{Error, Result};
use crate::tracking::{Measurement, SensorSource};

/// Conic `a x² + b xy + c y² + d x + e y + f = 0` normalised so that
/// `4ac − b² = 1`, with its geometric description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub coeffs: [f64; 6],
    pub center: [f64; 2],
    /// (major, minor) semi-axes.
    pub semi_axes: [f64; 2],
    /// Major-axis direction in (−π/2, π/2].
    pub orientation: f64,
    /// RMS Sampson distance of the fitted points [m].
    pub residual_rms: f64,
}

impl EllipseParams {
    pub fn discriminant(&self) -> f64 {
        let [a, b, c, ..] = self.coeffs;
        b * b - 4.0 * a * c
    }

    /// `aᵀ C a` with the constraint matrix C.
    pub fn constraint_value(&self) -> f64 {
        let a = nalgebra::Vector6::from_row_slice(&self.coeffs);
        (a.transpose() * constraint_matrix() * a)[0]
    }

    pub fn evaluate(&self, p: [f64; 2]) -> f64 {
        let [a, b, c, d, e, f] = self.coeffs;
        let (x, y) = (p[0], p[1]);
        a * x * x + b * x * y + c * y * y + d * x + e * y + f
    }

    /// Builds the normalised conic of a geometric ellipse.
    pub fn from_geometry(center: [f64; 2], semi_axes: [f64; 2], orientation: f64) -> Result<Self> {
        let (s, c) = orientation.sin_cos();
        let ia = 1.0 / (semi_axes[0] * semi_axes[0]);
        let ib = 1.0 / (semi_axes[1] * semi_axes[1]);
        let qa = c * c * ia + s * s * ib;
        let qb = 2.0 * s * c * (ia - ib);
        let qc = s * s * ia + c * c * ib;
        let (x0, y0) = (center[0], center[1]);
        let d = -2.0 * qa * x0 - qb * y0;
        let e = -2.0 * qc * y0 - qb * x0;
        let f = qa * x0 * x0 + qb * x0 * y0 + qc * y0 * y0 - 1.0;
        from_coeffs([qa, qb, qc, d, e, f], 0.0)
    }

    /// Boundary point at parameter `t`.
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let (s, c) = self.orientation.sin_cos();
        let (ct, st) = (t.cos() * self.semi_axes[0], t.sin() * self.semi_axes[1]);
        [
            self.center[0] + c * ct - s * st,
            self.center[1] + s * ct + c * st,
        ]
    }
}

/// Eigen-structure of the reduced generalised eigenproblem `S a = λ C a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// Real generalised eigenvalues in the original coordinates, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue of the selected (elliptic) eigenvector.
    pub lambda: f64,
    pub positive_eigenvalues: usize,
}

/// The 6×6 constraint matrix expressing `4ac − b²` as `aᵀ C a`.
pub fn constraint_matrix() -> Matrix6<f64> {
    let mut c = Matrix6::zeros();
    c[(0, 2)] = 2.0;
    c[(2, 0)] = 2.0;
    c[(1, 1)] = -1.0;
    c
}

/// Design matrix with rows `[x², xy, y², x, y, 1]`.
pub fn design_matrix(points: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 6, |i, j| {
        let [x, y] = points[i];
        match j {
            0 => x * x,
            1 => x * y,
            2 => y * y,
            3 => x,
            4 => y,
            _ => 1.0,
        }
    })
}

struct Normalization {
    mx: f64,
    my: f64,
    s: f64,
}

impl Normalization {
    fn of(points: &[[f64; 2]]) -> Result<Self> {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let ms = points
            .iter()
            .map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2))
            .sum::<f64>()
            / n;
        if !(ms > 0.0) || !ms.is_finite() {
            return Err(Error::FitDegenerate("points coincide".into()));
        }
        Ok(Self {
            mx,
            my,
            s: (ms / 2.0).sqrt(),
        })
    }

    fn apply(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points
            .iter()
            .map(|p| [(p[0] - self.mx) / self.s, (p[1] - self.my) / self.s])
            .collect()
    }

    /// Maps conic coefficients from normalised to original coordinates.
    fn restore(&self, k: [f64; 6]) -> [f64; 6] {
        let [a, b, c, d, e, f] = k;
        let (mx, my, s) = (self.mx, self.my, self.s);
        let s2 = s * s;
        [
            a / s2,
            b / s2,
            c / s2,
            (-2.0 * a * mx - b * my) / s2 + d / s,
            (-2.0 * c * my - b * mx) / s2 + e / s,
            (a * mx * mx + b * mx * my + c * my * my) / s2 - (d * mx + e * my) / s + f,
        ]
    }
}

fn scatter_blocks(points: &[[f64; 2]]) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for &[x, y] in points {
        let q = Vector3::new(x * x, x * y, y * y);
        let l = Vector3::new(x, y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }
    (s1, s2, s3)
}

/// Null vector of a (numerically) rank-2 3×3 matrix from the best row cross
/// product.
fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let rows = [
        m.row(0).transpose(),
        m.row(1).transpose(),
        m.row(2).transpose(),
    ];
    let cands = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ];
    let best = cands
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .unwrap();
    best / best.norm()
}

fn check_points(cluster: &PointCluster) -> Result<()> {
    if cluster.points.len() < MIN_FIT_POINTS {
        return Err(Error::FitDegenerate(format!(
            "{} points, at least {MIN_FIT_POINTS} needed",
            cluster.points.len()
        )));
    }
    if cluster.points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::FitDegenerate("non-finite point".into()));
    }
    Ok(())
}

/// Direct least-squares ellipse fit with the numerically stable block
/// reduction: the 6×6 problem `S a = λ C a` is reduced to the 3×3
/// eigenproblem of `C₁⁻¹ (S₁ − S₂ S₃⁻¹ S₂ᵀ)` on the quadratic coefficients.
pub fn fit_ellipse_stable(cluster: &PointCluster) -> Result<EllipseParams> {
    fit_ellipse_stable_with_diagnostics(cluster).map(|(e, _)| e)
}

pub fn fit_ellipse_stable_with_diagnostics(
    cluster: &PointCluster,
) -> Result<(EllipseParams, FitDiagnostics)> {
    check_points(cluster)?;
    let norm = Normalization::of(&cluster.points)?;
    let pts = norm.apply(&cluster.points);
    let (s1, s2, s3) = scatter_blocks(&pts);

    let s3_inv = s3
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| {
            Error::FitDegenerate("collinear points (linear scatter block singular)".into())
        })?;
    if s3.determinant().abs() < 1e-12 * s3.norm().powi(3) {
        return Err(Error::FitDegenerate("collinear points".into()));
    }
    let t = -(s3_inv * s2.transpose());
    let m = s1 + s2 * t;
    // C₁⁻¹ M, with C₁ = [[0,0,2],[0,−1,0],[2,0,0]].
    let reduced = Matrix3::from_rows(&[m.row(2) * 0.5, -m.row(1), m.row(0) * 0.5]);
    if reduced.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitDegenerate("non-finite scatter".into()));
    }

    let scale = m.norm().max(f64::MIN_POSITIVE);
    let mut eigs: Vec<f64> = reduced
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-8 * scale)
        .map(|z| z.re)
        .collect();
    eigs.sort_by(f64::total_cmp);

    let mut chosen: Option<(f64, Vector3<f64>)> = None;
    for &lam in &eigs {
        let a1 = null_vector(&(reduced - Matrix3::identity() * lam));
        let cond = 4.0 * a1[0] * a1[2] - a1[1] * a1[1];
        if cond > 0.0
            && chosen
                .as_ref()
                .is_none_or(|(_, best)| cond > 4.0 * best[0] * best[2] - best[1] * best[1])
        {
            chosen = Some((lam, a1));
        }
    }
    let (lam_n, a1) = chosen.ok_or_else(|| Error::FitFailed("no elliptic eigenvector".into()))?;
    let a2 = t * a1;
    let restored = norm.restore([a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]]);

    // Similarity normalisation scales every generalised eigenvalue by s⁴.
    let s4 = norm.s.powi(4);
    let eigenvalues: Vec<f64> = eigs.iter().map(|l| l * s4).collect();
    let positive = eigenvalues.iter().filter(|&&l| l > 0.0).count();
    let mut params = from_coeffs(restored, 0.0)?;
    params.residual_rms = sampson_rms(&params, &cluster.points);
    Ok((
        params,
        FitDiagnostics {
            eigenvalues,
            lambda: lam_n * s4,
            positive_eigenvalues: positive,
        },
    ))
}

/// Ordinary least squares on the conic with `f` pinned to −1, solved in
/// centroid-centred, scale-normalised coordinates.
pub fn fit_ellipse_mlr(cluster: &PointCluster) -> Result<EllipseParams> {
    check_points(cluster)?;
    let norm = Normalization::of(&cluster.points)?;
    let pts = norm.apply(&cluster.points);
    let a = DMatrix::from_fn(pts.len(), 5, |i, j| {
        let [x, y] = pts[i];
        [x * x, x * y, y * y, x, y][j]
    });
    let rhs = DVector::from_element(pts.len(), 1.0);
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if !(sv.min() > 1e-12 * smax) {
        return Err(Error::FitDegenerate(
            "regression matrix rank deficient".into(),
        ));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::FitDegenerate(e.to_string()))?;
    let k = [sol[0], sol[1], sol[2], sol[3], sol[4], -1.0];
    let disc = k[1] * k[1] - 4.0 * k[0] * k[2];
    if disc >= 0.0 {
        return Err(Error::NotAnEllipse { discriminant: disc });
    }
    let mut params = from_coeffs(norm.restore(k), 0.0)?;
    params.residual_rms = sampson_rms(&params, &cluster.points);
    Ok(params)
}

/// Normalises raw conic coefficients and derives the geometry.
fn from_coeffs(raw: [f64; 6], residual_rms: f64) -> Result<EllipseParams> {
    let [a, b, c, ..] = raw;
    let disc = b * b - 4.0 * a * c;
    if !(disc < 0.0) {
        return Err(Error::NotAnEllipse { discriminant: disc });
    }
    let sign = if a + c > 0.0 { 1.0 } else { -1.0 };
    let kappa = (-disc).sqrt() * sign;
    let k = raw.map(|v| v / kappa);
    let [a, b, c, d, e, f] = k;

    let center = Matrix2::new(2.0 * a, b, b, 2.0 * c)
        .try_inverse()
        .map(|inv| inv * Vector2::new(-d, -e))
        .ok_or_else(|| Error::FitFailed("singular centre system".into()))?;
    let f0 = f + 0.5 * (d * center[0] + e * center[1]);
    let eig = SymmetricEigen::new(Matrix2::new(a, 0.5 * b, 0.5 * b, c));
    let (l_small, l_large) = {
        let (p, q) = (eig.eigenvalues[0], eig.eigenvalues[1]);
        (p.min(q), p.max(q))
    };
    if !(f0 < 0.0) || !(l_small > 0.0) {
        return Err(Error::FitFailed("conic has no real points".into()));
    }
    let major = (-f0 / l_small).sqrt();
    let minor = (-f0 / l_large).sqrt();
    let orientation = 0.5 * (-b).atan2(c - a);
    let orientation = if orientation <= -std::f64::consts::FRAC_PI_2 {
        orientation + std::f64::consts::PI
    } else {
        orientation
    };
    if !(major.is_finite() && minor.is_finite()) {
        return Err(Error::FitFailed("non-finite axes".into()));
    }
    Ok(EllipseParams {
        coeffs: k,
        center: [center[0], center[1]],
        semi_axes: [major, minor],
        orientation,
        residual_rms,
    })
}

/// First-order geometric distance |F| / ‖∇F‖, RMS over the points.
fn sampson_rms(e: &EllipseParams, points: &[[f64; 2]]) -> f64 {
    let [a, b, c, d, ee, _] = e.coeffs;
    let sum: f64 = points
        .iter()
        .map(|&p| {
            let fx = 2.0 * a * p[0] + b * p[1] + d;
            let fy = b * p[0] + 2.0 * c * p[1] + ee;
            let g2 = fx * fx + fy * fy;
            let val = e.evaluate(p);
            if g2 > 0.0 {
                val * val / g2
            } else {
                0.0
            }
        })
        .sum();
    (sum / points.len().max(1) as f64).sqrt()
}

/// Measurement covariance model for ellipse centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarNoiseModel {
    /// Covariance of a well-fitting cluster [m²].
    pub base_covariance: [[f64; 2]; 2],
    /// Residual RMS [m] up to which the base covariance applies.
    pub residual_reference: f64,
}

impl Default for LidarNoiseModel {
    fn default() -> Self {
        Self {
            base_covariance: [[1.0, 0.0], [0.0, 1.0]],
            residual_reference: 0.1,
        }
    }
}

impl LidarNoiseModel {
    /// `R = base · max(1, (rms / reference)²)`.
    pub fn covariance(&self, residual_rms: f64) -> Matrix2<f64> {
        let b = self.base_covariance;
        let base = Matrix2::new(b[0][0], b[0][1], b[1][0], b[1][1]);
        let ratio = residual_rms / self.residual_reference;
        base * (ratio * ratio).max(1.0)
    }
}

pub fn ellipse_to_measurement(e: &EllipseParams, t: f64, model: &LidarNoiseModel) -> Measurement {
    Measurement {
        source: SensorSource::Lidar,
        z: Vector2::new(e.center[0], e.center[1]),
        r: model.covariance(e.residual_rms),
        stamp: t,
        vessel_id: None,
    }
}
