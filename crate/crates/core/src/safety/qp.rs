//! Dual active-set QP (Goldfarb–Idnani) for a diagonal Hessian:
//! minimise ½ xᵀ diag(h) x + gᵀx subject to aⱼᵀx ≥ bⱼ.

use std::borrow::Borrow;

use crate::error::{Error, Result};

/// Constraint row. Dense rows cover a prefix of the variables, plus at most
/// one coefficient beyond it.
#[derive(Debug, Clone)]
pub(crate) enum Row {
    Dense {
        coef: Vec<f64>,
        extra: Option<(usize, f64)>,
    },
    Unit {
        index: usize,
        sign: f64,
    },
}

/// Dot product with four accumulators so the loop vectorises.
fn dot_prefix(a: &[f64], b: &[f64]) -> f64 {
    let b = &b[..a.len()];
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (p, q) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            acc[i] += p[i] * q[i];
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(p, q)| p * q)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Row {
    #[cfg(test)]
    pub(crate) fn dense(coef: Vec<f64>) -> Self {
        Row::Dense { coef, extra: None }
    }

    /// Coefficient of variable `i`.
    fn coef(&self, i: usize) -> f64 {
        match self {
            Row::Dense { coef, extra } => match extra {
                Some((j, v)) if *j == i => *v,
                _ => coef.get(i).copied().unwrap_or(0.0),
            },
            Row::Unit { index, sign } => {
                if *index == i {
                    *sign
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn dot(&self, x: &[f64]) -> f64 {
        match self {
            Row::Dense { coef, extra } => {
                dot_prefix(coef, x) + extra.map_or(0.0, |(j, v)| v * x[j])
            }
            Row::Unit { index, sign } => sign * x[*index],
        }
    }

    fn dot_self(&self) -> f64 {
        match self {
            Row::Dense { coef, extra } => {
                dot_prefix(coef, coef) + extra.map_or(0.0, |(_, v)| v * v)
            }
            Row::Unit { .. } => 1.0,
        }
    }

    /// Σ aᵢ bᵢ / hᵢ for two rows.
    fn weighted_dot(&self, other: &Row, h_inv: &[f64]) -> f64 {
        match (self, other) {
            (Row::Dense { coef: a, extra: ea }, Row::Dense { coef: b, extra: eb }) => {
                let len = a.len().min(b.len());
                let mut acc = [0.0; 4];
                let mut i = 0;
                while i + 4 <= len {
                    for l in 0..4 {
                        acc[l] += a[i + l] * b[i + l] * h_inv[i + l];
                    }
                    i += 4;
                }
                let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
                while i < len {
                    s += a[i] * b[i] * h_inv[i];
                    i += 1;
                }
                if let Some((j, v)) = ea {
                    s += v * other.coef(*j) * h_inv[*j];
                }
                if let Some((j, v)) = eb {
                    // Avoid counting a shared extra index twice.
                    if ea.is_none_or(|(k, _)| k != *j) {
                        s += v * self.coef(*j) * h_inv[*j];
                    }
                }
                s
            }
            (d @ Row::Dense { .. }, Row::Unit { index, sign })
            | (Row::Unit { index, sign }, d @ Row::Dense { .. }) => {
                d.coef(*index) * sign * h_inv[*index]
            }
            (Row::Unit { index: i, sign: s }, Row::Unit { index: j, sign: t }) => {
                if i == j {
                    s * t * h_inv[*i]
                } else {
                    0.0
                }
            }
        }
    }

    fn axpy(&self, alpha: f64, y: &mut [f64]) {
        match self {
            Row::Dense { coef, extra } => {
                y.iter_mut().zip(coef).for_each(|(v, p)| *v += alpha * p);
                if let Some((j, v)) = extra {
                    y[*j] += alpha * v;
                }
            }
            Row::Unit { index, sign } => y[*index] += alpha * sign,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub row: Row,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the active constraints (index, value).
    pub active: Vec<(usize, f64)>,
}

#[derive(Debug, PartialEq)]
pub(crate) enum QpFailure {
    Infeasible,
    IterationLimit,
}

struct ActiveSet {
    idx: Vec<usize>,
    mult: Vec<f64>,
    /// Lower Cholesky factor of G = Nᵀ H⁻¹ N, row-major with stride `cap`.
    chol: Vec<f64>,
    cap: usize,
}

impl ActiveSet {
    fn new(cap: usize) -> Self {
        Self {
            idx: Vec::new(),
            mult: Vec::new(),
            chol: vec![0.0; cap * cap],
            cap,
        }
    }

    fn len(&self) -> usize {
        self.idx.len()
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.chol[i * self.cap + j]
    }

    fn solve_g(&self, rhs: &[f64]) -> Vec<f64> {
        let q = self.len();
        let mut y = rhs.to_vec();
        for i in 0..q {
            let row = &self.chol[i * self.cap..i * self.cap + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.l(i, i);
        }
        for i in (0..q).rev() {
            let mut s = y[i];
            for k in (i + 1)..q {
                s -= self.l(k, i) * y[k];
            }
            y[i] = s / self.l(i, i);
        }
        y
    }

    /// Appends a row; returns false if the new pivot is not positive.
    fn append(&mut self, cons: &[&Constraint], j: usize, h_inv: &[f64]) -> bool {
        let q = self.len();
        if q == self.cap {
            return false;
        }
        let diag = cons[j].row.weighted_dot(&cons[j].row, h_inv);
        let mut l_row = vec![0.0; q];
        for i in 0..q {
            let col = cons[self.idx[i]].row.weighted_dot(&cons[j].row, h_inv);
            let row = &self.chol[i * self.cap..i * self.cap + i];
            let s: f64 = row.iter().zip(&l_row[..i]).map(|(a, b)| a * b).sum();
            l_row[i] = (col - s) / self.l(i, i);
        }
        let pivot = diag - l_row.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 1e-14 * diag.max(f64::MIN_POSITIVE)) {
            return false;
        }
        let base = q * self.cap;
        self.chol[base..base + q].copy_from_slice(&l_row);
        self.chol[base + q] = pivot.sqrt();
        self.idx.push(j);
        true
    }

    /// Removes the constraint at `pos`, restoring the triangular factor with
    /// Givens rotations.
    fn drop(&mut self, pos: usize) {
        let q = self.len();
        let cap = self.cap;
        for i in pos..q - 1 {
            self.chol
                .copy_within((i + 1) * cap..(i + 1) * cap + q, i * cap);
        }
        for j in pos..q - 1 {
            let a = self.l(j, j);
            let b = self.l(j, j + 1);
            let r = a.hypot(b);
            let (c, s) = (a / r, b / r);
            for i in j..q - 1 {
                let x = self.chol[i * cap + j];
                let y = self.chol[i * cap + j + 1];
                self.chol[i * cap + j] = c * x + s * y;
                self.chol[i * cap + j + 1] = -s * x + c * y;
            }
        }
        for i in 0..q {
            self.chol[i * cap + q - 1] = 0.0;
        }
        self.chol[(q - 1) * cap..q * cap]
            .iter_mut()
            .for_each(|v| *v = 0.0);
        self.idx.remove(pos);
        self.mult.remove(pos);
    }
}

/// Solves the QP from the unconstrained minimum. Violated constraints listed
/// in `hint` are added first, in order; after that the most violated
/// constraint is added at each outer iteration.
pub(crate) fn solve_qp<C: Borrow<Constraint>>(
    h: &[f64],
    g: &[f64],
    cons: &[C],
    hint: &[usize],
    tol: f64,
    max_iter: usize,
) -> std::result::Result<QpSolution, QpFailure> {
    let cons: Vec<&Constraint> = cons.iter().map(|c| c.borrow()).collect();
    let cons = cons.as_slice();
    let n = h.len();
    let h_inv: Vec<f64> = h.iter().map(|v| 1.0 / v).collect();
    let mut x: Vec<f64> = (0..n).map(|i| -g[i] * h_inv[i]).collect();
    let mut act = ActiveSet::new(n);
    let norms: Vec<f64> = cons
        .iter()
        .map(|c| c.row.weighted_dot(&c.row, &h_inv).sqrt().max(1e-300))
        .collect();
    let mut is_active = vec![false; cons.len()];
    let mut iterations = 0;
    let mut hints = hint.iter();
    // Cached residuals with the path length of x at the time they were
    // computed; ‖a‖₂ times the distance travelled since bounds the change.
    let lengths: Vec<f64> = cons.iter().map(|c| c.row.dot_self().sqrt()).collect();
    let mut cached: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, 0.0); cons.len()];
    let mut travelled = 0.0;

    loop {
        let violation = |j: usize, x: &[f64]| (cons[j].row.dot(x) - cons[j].rhs) / norms[j];
        let mut p = hints
            .by_ref()
            .copied()
            .find(|&j| !is_active[j] && violation(j, &x) < -tol);
        if p.is_none() {
            // Most violated constraint, scaled by its H⁻¹ norm.
            let mut worst = -tol;
            for j in 0..cons.len() {
                if is_active[j] {
                    continue;
                }
                let (res, at) = cached[j];
                if res - lengths[j] * (travelled - at) > 0.0 {
                    continue;
                }
                let r = cons[j].row.dot(&x) - cons[j].rhs;
                cached[j] = (r, travelled);
                let s = r / norms[j];
                if s < worst {
                    worst = s;
                    p = Some(j);
                }
            }
        }
        let Some(p) = p else {
            return Ok(QpSolution {
                x,
                active: act
                    .idx
                    .iter()
                    .copied()
                    .zip(act.mult.iter().copied())
                    .collect(),
            });
        };

        let mut u_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpFailure::IterationLimit);
            }
            let q = act.len();
            // r = G⁻¹ Nᵀ H⁻¹ n_p, z = H⁻¹ (n_p − N r)
            let rhs: Vec<f64> = act
                .idx
                .iter()
                .map(|&i| cons[i].row.weighted_dot(&cons[p].row, &h_inv))
                .collect();
            let r = act.solve_g(&rhs);
            let mut z = vec![0.0; n];
            cons[p].row.axpy(1.0, &mut z);
            for (k, &i) in act.idx.iter().enumerate() {
                cons[i].row.axpy(-r[k], &mut z);
            }
            z.iter_mut().zip(&h_inv).for_each(|(v, w)| *v *= w);
            let zn = cons[p].row.dot(&z);
            // Rounding in zn is of order ε‖n_p‖²; anything above that is a real step.
            let full_ok = zn > 64.0 * f64::EPSILON * norms[p] * norms[p];

            let mut t1 = f64::INFINITY;
            let mut block = None;
            for k in 0..q {
                if r[k] > 0.0 {
                    let ratio = act.mult[k] / r[k];
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(k);
                    }
                }
            }
            let s_p = cons[p].row.dot(&x) - cons[p].rhs;
            let t2 = if full_ok { -s_p / zn } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpFailure::Infeasible);
            }
            if full_ok {
                x.iter_mut().zip(&z).for_each(|(v, d)| *v += t * d);
                travelled += t * z.iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            for k in 0..q {
                act.mult[k] -= t * r[k];
            }
            u_p += t;
            if t2 <= t1 {
                if act.append(cons, p, &h_inv) {
                    act.mult.push(u_p);
                    is_active[p] = true;
                } else {
                    return Err(QpFailure::Infeasible);
                }
                break;
            }
            let k = block.unwrap();
            is_active[act.idx[k]] = false;
            act.drop(k);
        }
    }
}

impl From<QpFailure> for Error {
    fn from(f: QpFailure) -> Self {
        match f {
            QpFailure::Infeasible => Error::Qp("infeasible".into()),
            QpFailure::IterationLimit => Error::Qp("iteration limit".into()),
        }
    }
}

#[allow(dead_code)]
pub(crate) fn objective(h: &[f64], g: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .zip(h)
        .zip(g)
        .map(|((x, h), g)| 0.5 * h * x * x + g * x)
        .sum()
}

#[allow(dead_code)]
pub(crate) fn check(cons: &[Constraint], x: &[f64]) -> Result<f64> {
    Ok(cons
        .iter()
        .map(|c| (c.rhs - c.row.dot(x)).max(0.0))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    fn dense(a: &[f64], b: f64) -> Constraint {
        Constraint {
            row: Row::dense(a.to_vec()),
            rhs: b,
        }
    }

    #[test]
    fn unconstrained_minimum() {
        let s = solve_qp::<Constraint>(&[2.0, 4.0], &[-2.0, 4.0], &[], &[], 1e-12, 100).unwrap();
        assert_eq!(s.x, vec![1.0, -1.0]);
    }

    #[test]
    fn single_active_constraint() {
        // min ½(x² + y²) s.t. x + y ≥ 2 → (1, 1), multiplier 1.
        let s = solve_qp(
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[dense(&[1.0, 1.0], 2.0)],
            &[],
            1e-12,
            100,
        )
        .unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.active[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slack_step_on_badly_scaled_row() {
        // The x part of the row is spanned by the active bound x ≤ 1, so the
        // slack is the only free direction although ‖n‖²_{H⁻¹} ≈ 4e12.
        let cons = [
            Constraint {
                row: Row::Unit {
                    index: 0,
                    sign: -1.0,
                },
                rhs: -1.0,
            },
            Constraint {
                row: Row::Dense {
                    coef: vec![2e3],
                    extra: Some((1, 1.0)),
                },
                rhs: 5e3,
            },
        ];
        let s = solve_qp(&[1e-6, 1.0], &[-5e-6, 0.0], &cons, &[], 1e-12, 100).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-9, "{:?}", s.x);
        assert!((s.x[1] - 3e3).abs() < 1e-6, "{:?}", s.x);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let cons = [
            Constraint {
                row: Row::Unit {
                    index: 0,
                    sign: 1.0,
                },
                rhs: 1.0,
            },
            Constraint {
                row: Row::Unit {
                    index: 0,
                    sign: -1.0,
                },
                rhs: 0.0,
            },
        ];
        assert_eq!(
            solve_qp(&[1.0], &[0.0], &cons, &[], 1e-12, 100).unwrap_err(),
            QpFailure::Infeasible
        );
    }

    /// KKT conditions on random feasible problems: stationarity, primal and
    /// dual feasibility and complementarity.
    #[test]
    fn random_problems_satisfy_kkt() {
        let mut rng = stream_rng(21, Stream::Test);
        for _ in 0..300 {
            let n = rng.random_range(2..8);
            let m = rng.random_range(1..12);
            let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut cons: Vec<Constraint> = Vec::new();
            for _ in 0..m {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let val: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
                // x0 strictly feasible.
                cons.push(dense(&a, val - rng.random_range(0.0..1.0)));
            }
            cons.push(Constraint {
                row: Row::Unit {
                    index: 0,
                    sign: -1.0,
                },
                rhs: -(x0[0] + 0.5),
            });
            let s = solve_qp(&h, &g, &cons, &[], 1e-12, 1000).unwrap();
            assert!(check(&cons, &s.x).unwrap() < 1e-9);
            let mut grad: Vec<f64> = (0..n).map(|i| h[i] * s.x[i] + g[i]).collect();
            for &(j, mu) in &s.active {
                assert!(mu >= -1e-9);
                assert!((cons[j].row.dot(&s.x) - cons[j].rhs).abs() < 1e-8);
                cons[j].row.axpy(-mu, &mut grad);
            }
            assert!(grad.iter().all(|v| v.abs() < 1e-8), "{grad:?}");
        }
    }
}
