use std::collections::HashMap;
use std::time::{Duration, Instant};

use nalgebra::{Matrix6x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::obstacles::{distance_to_obstacle, ObstacleForecast};
use super::qp::{solve_qp, Constraint, QpFailure, Row};
use super::terminal::{TerminalSet, TerminalSetConfig};
use crate::error::{Error, Result};
use crate::vessel::{
    rk4_jacobians, rk4_step_raw, ControlInput, Disturbance, StateVector, VesselParams, VesselState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    /// Use the scenario disturbance, held constant over the horizon.
    #[default]
    Known,
    /// Predict with τ_d = 0.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfConfig {
    pub horizon: usize,
    pub dt: f64,
    pub d_safe: f64,
    pub d_f: f64,
    /// γ_u1..γ_u3 of the input weighting.
    pub gamma: [f64; 3],
    /// Penalty ρ on obstacle slack.
    pub slack_penalty: f64,
    /// Feasibility tolerance on normalised constraints [m].
    pub tolerance: f64,
    pub max_sqp_iterations: usize,
    /// Standard deviations of tracking uncertainty added to obstacle radii.
    pub inflation_sigmas: f64,
    /// Tightening of obstacle constraints inside the QP [m].
    pub backoff: f64,
    pub disturbance_mode: DisturbanceMode,
    pub terminal: TerminalSetConfig,
}

impl Default for PsfConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            dt: 0.5,
            d_safe: 20.0,
            d_f: 10.0,
            gamma: [1.0; 3],
            slack_penalty: 1e4,
            tolerance: 1e-6,
            max_sqp_iterations: 8,
            inflation_sigmas: 3.0,
            backoff: 0.05,
            disturbance_mode: DisturbanceMode::Known,
            terminal: TerminalSetConfig::default(),
        }
    }
}

impl PsfConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(format!("psf.{field}"), msg))
            }
        };
        check(self.horizon >= 1, "horizon", "must be at least 1")?;
        check(
            self.dt > 0.0 && self.dt.is_finite(),
            "dt",
            "must be positive",
        )?;
        check(self.d_safe > 0.0, "d_safe", "must be positive")?;
        check(self.d_f >= 0.0, "d_f", "must be non-negative")?;
        check(
            self.gamma.iter().all(|g| *g > 0.0),
            "gamma",
            "weights must be positive",
        )?;
        check(
            self.slack_penalty > 0.0,
            "slack_penalty",
            "must be positive",
        )?;
        check(self.tolerance > 0.0, "tolerance", "must be positive")?;
        check(
            self.max_sqp_iterations >= 1,
            "max_sqp_iterations",
            "must be at least 1",
        )?;
        check(
            self.inflation_sigmas >= 0.0,
            "inflation_sigmas",
            "must be non-negative",
        )?;
        check(self.backoff >= 0.0, "backoff", "must be non-negative")?;
        Ok(())
    }

    /// Diagonal of W, γ_i / (ub_i − lb_i)².
    pub fn input_weights(&self, params: &VesselParams) -> Vector3<f64> {
        let span = params.input_upper().to_vector() - params.input_lower().to_vector();
        Vector3::new(
            self.gamma[0] / (span[0] * span[0]),
            self.gamma[1] / (span[1] * span[1]),
            self.gamma[2] / (span[2] * span[2]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PsfStatus {
    SafePassthrough,
    Modified,
    Relaxed,
    Infeasible,
}

impl PsfStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PsfStatus::SafePassthrough => "SAFE_PASSTHROUGH",
            PsfStatus::Modified => "MODIFIED",
            PsfStatus::Relaxed => "RELAXED",
            PsfStatus::Infeasible => "INFEASIBLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub u0_seq: Vec<ControlInput>,
    pub x_seq: Vec<VesselState>,
    /// δ_u = u_L − u_0 at k = 0.
    pub delta_u: ControlInput,
    /// Total obstacle slack [m].
    pub slack_total: f64,
    pub status: PsfStatus,
    pub iterations: usize,
    /// Σ ‖u_k − u_L‖²_W.
    pub cost: f64,
    /// Largest violation of any hard constraint on `x_seq` [m].
    pub max_violation: f64,
    /// Wall-clock time; not serialised so traces stay reproducible.
    #[serde(skip)]
    pub solve_time: Duration,
}

impl OcpSolution {
    pub fn u0(&self) -> ControlInput {
        self.u0_seq[0]
    }
}

/// Per-step safety margins of a planned trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// m_k = min_i d(p_k, O_i,k) − d_safe (∞ without obstacles).
    pub margins: Vec<f64>,
    pub first_violation: Option<usize>,
}

pub fn safety_margin_report(
    x_seq: &[VesselState],
    obstacles: &ObstacleForecast,
    d_safe: f64,
) -> MarginReport {
    let margins: Vec<f64> = x_seq
        .iter()
        .enumerate()
        .map(|(k, x)| {
            obstacles
                .obstacles
                .iter()
                .filter(|o| k < o.positions.len())
                .map(|o| distance_to_obstacle([x.x, x.y], o.positions[k], o.effective_radius(k)))
                .fold(f64::INFINITY, f64::min)
                - d_safe
        })
        .collect();
    let first_violation = margins.iter().position(|m| *m < 0.0);
    MarginReport {
        margins,
        first_violation,
    }
}

/// Previous solution used to initialise the next solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub time: f64,
    pub u: Vec<Vector3<f64>>,
    pub x: Vec<StateVector>,
}

struct Problem<'a> {
    params: &'a VesselParams,
    cfg: &'a PsfConfig,
    terminal: &'a TerminalSet,
    obstacles: &'a ObstacleForecast,
    u_l: Vector3<f64>,
    dist: Vector3<f64>,
    w: Vector3<f64>,
    lb: Vector3<f64>,
    ub: Vector3<f64>,
    x0: StateVector,
}

#[derive(Clone)]
struct Iterate {
    u: Vec<Vector3<f64>>,
    x: Vec<StateVector>,
}

/// Hard-constraint evaluation of a trajectory.
struct Evaluation {
    /// ℓ1 sum of violations of the constraints that are never relaxed.
    hard: f64,
    /// Worst violation of the never-relaxed constraints.
    hard_max: f64,
    /// Per-obstacle worst violation max_k max(0, −c_ik).
    obstacle: Vec<f64>,
    obstacle_sum: f64,
}

impl<'a> Problem<'a> {
    fn n(&self) -> usize {
        self.cfg.horizon
    }

    /// Required clearance radius of obstacle i at step k.
    fn clearance(&self, i: usize, k: usize, backoff: f64) -> f64 {
        let o = &self.obstacles.obstacles[i];
        let mut r = o.effective_radius(k) + self.cfg.d_safe + backoff;
        if k == self.n() {
            r += self.cfg.d_f;
        }
        r
    }

    /// Normalised obstacle constraint (‖p − o‖² − R²)/(2R) ≥ 0 and its
    /// gradient with respect to p.
    fn obstacle_constraint(
        &self,
        i: usize,
        k: usize,
        x: &StateVector,
        backoff: f64,
    ) -> (f64, Vector2<f64>) {
        let o = self.obstacles.obstacles[i].center(k);
        let r = self.clearance(i, k, backoff);
        let d = Vector2::new(x[0], x[1]) - o;
        ((d.norm_squared() - r * r) / (2.0 * r), d / r)
    }

    fn cost(&self, u: &[Vector3<f64>]) -> f64 {
        u.iter()
            .map(|uk| {
                let e = uk - self.u_l;
                e.component_mul(&e).dot(&self.w)
            })
            .sum()
    }

    fn rollout(&self, u: &[Vector3<f64>]) -> Vec<StateVector> {
        let mut x = Vec::with_capacity(u.len() + 1);
        x.push(self.x0);
        for uk in u {
            let last = *x.last().unwrap();
            x.push(rk4_step_raw(
                &last,
                uk,
                &self.dist,
                self.params,
                self.cfg.dt,
            ));
        }
        x
    }

    fn evaluate(&self, x: &[StateVector], backoff: f64) -> Evaluation {
        let slb = self.params.state_lower();
        let sub = self.params.state_upper();
        let mut hard = 0.0;
        let mut hard_max: f64 = 0.0;
        let mut add = |v: f64| {
            if v > 0.0 {
                hard += v;
                hard_max = hard_max.max(v);
            }
        };
        for xk in &x[1..] {
            for m in [0, 1, 3, 4, 5] {
                if slb[m].is_finite() {
                    add(slb[m] - xk[m]);
                }
                if sub[m].is_finite() {
                    add(xk[m] - sub[m]);
                }
            }
        }
        let nu_n = x[self.n()].fixed_rows::<3>(3).into_owned();
        add(self.terminal.level(&nu_n) - 1.0);

        let mut obstacle = vec![0.0; self.obstacles.obstacles.len()];
        for (i, worst) in obstacle.iter_mut().enumerate() {
            for (k, xk) in x.iter().enumerate().skip(1) {
                let (c, _) = self.obstacle_constraint(i, k, xk, backoff);
                *worst = f64::max(*worst, -c);
            }
        }
        let obstacle_sum = obstacle.iter().sum();
        Evaluation {
            hard,
            hard_max,
            obstacle,
            obstacle_sum,
        }
    }

    fn slack_cost(&self, z: &[f64]) -> f64 {
        z.iter()
            .map(|z| self.cfg.slack_penalty * z + 0.5 * z * z)
            .sum()
    }
}

struct Linearization {
    /// Defects f(x_k, u_k) − x_{k+1}.
    defects: Vec<StateVector>,
    /// Free response e_k of the condensed state correction.
    e: Vec<StateVector>,
    /// Sensitivities S[k][j] = ∂Δx_k/∂δ_j for j < k.
    s: Vec<Vec<Matrix6x3<f64>>>,
}

fn linearize(p: &Problem, it: &Iterate) -> Linearization {
    let n = p.n();
    let mut defects = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let (next, ak, bk) = rk4_jacobians(&it.x[k], &it.u[k], &p.dist, p.params, p.cfg.dt);
        defects.push(next - it.x[k + 1]);
        a.push(ak);
        b.push(bk);
    }
    let mut e = vec![StateVector::zeros(); n + 1];
    let mut s: Vec<Vec<Matrix6x3<f64>>> = vec![Vec::new(); n + 1];
    for k in 0..n {
        e[k + 1] = a[k] * e[k] + defects[k];
        let mut row = Vec::with_capacity(k + 1);
        for j in 0..k {
            row.push(a[k] * s[k][j]);
        }
        row.push(b[k]);
        s[k + 1] = row;
    }
    Linearization { defects, e, s }
}

/// Nonlinear function behind a QP row, kept for second-order corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum RowKind {
    Input { k: usize, m: usize, upper: bool },
    Slack { i: usize },
    Obstacle { i: usize, k: usize },
    StateLower { k: usize, m: usize },
    StateUpper { k: usize, m: usize },
    Terminal,
}

struct Subproblem {
    h: Vec<f64>,
    g: Vec<f64>,
    cons: Vec<Constraint>,
    kinds: Vec<RowKind>,
    n: usize,
}

impl Subproblem {
    fn push(&mut self, row: Row, rhs: f64, kind: RowKind) {
        self.cons.push(Constraint { row, rhs });
        self.kinds.push(kind);
    }

    /// Adds `row · δ ≥ rhs` given the sensitivity rows `coef_j` (1×3 per
    /// input block j < k) unless the bound can never be violated within the
    /// input box.
    fn push_state_row(
        &mut self,
        coefs: impl Iterator<Item = (usize, [f64; 3])>,
        rhs: f64,
        span: &Vector3<f64>,
        slack: Option<usize>,
        kind: RowKind,
    ) {
        let mut row = Vec::with_capacity(3 * self.n);
        let mut reach = 0.0;
        for (j, c) in coefs {
            debug_assert_eq!(row.len(), 3 * j);
            for m in 0..3 {
                row.push(c[m]);
                reach += c[m].abs() * span[m];
            }
        }
        if rhs < -reach {
            return;
        }
        let extra = slack.map(|zi| (zi, 1.0));
        self.push(Row::Dense { coef: row, extra }, rhs, kind);
    }

    /// Indices of the rows of the given kinds that are present.
    fn indices_of(&self, kinds: &[RowKind]) -> Vec<usize> {
        let index: HashMap<RowKind, usize> = self
            .kinds
            .iter()
            .enumerate()
            .map(|(j, k)| (*k, j))
            .collect();
        kinds.iter().filter_map(|k| index.get(k).copied()).collect()
    }

    /// Solves the QP. Obstacle rows with a large margin at δ = 0 are held
    /// back and only added once the solution violates them.
    fn solve(&self, hint: &[usize]) -> std::result::Result<QpStep, QpFailure> {
        let mut working: Vec<usize> = Vec::with_capacity(self.cons.len());
        let mut held = Vec::new();
        for (j, (c, kind)) in self.cons.iter().zip(&self.kinds).enumerate() {
            if matches!(kind, RowKind::Obstacle { .. })
                && -c.rhs > LAZY_MARGIN
                && !hint.contains(&j)
            {
                held.push(j);
            } else {
                working.push(j);
            }
        }
        let mut local_hint: Vec<usize> = hint
            .iter()
            .filter_map(|j| working.iter().position(|w| w == j))
            .collect();
        let sol = loop {
            let rows: Vec<&Constraint> = working.iter().map(|&j| &self.cons[j]).collect();
            let max_iter = 20 * (self.h.len() + rows.len());
            let sol = solve_qp(&self.h, &self.g, &rows, &local_hint, 1e-10, max_iter)?;
            let before = held.len();
            held.retain(|&j| {
                let c = &self.cons[j];
                if c.row.dot(&sol.x) - c.rhs < 0.0 {
                    working.push(j);
                    false
                } else {
                    true
                }
            });
            if held.len() == before {
                break sol;
            }
            local_hint = sol.active.iter().map(|(j, _)| *j).collect();
        };
        let n = self.n;
        let delta = (0..n)
            .map(|k| Vector3::new(sol.x[3 * k], sol.x[3 * k + 1], sol.x[3 * k + 2]))
            .collect();
        let z = sol.x[3 * n..].iter().map(|v| v.max(0.0)).collect();
        let max_multiplier = sol.active.iter().map(|(_, m)| m.abs()).fold(0.0, f64::max);
        Ok(QpStep {
            delta,
            z,
            max_multiplier,
            active: sol.active.iter().map(|(j, _)| working[*j]).collect(),
            raw: sol.x,
        })
    }

    /// Second-order correction: shifts every nonlinear row by the gap between
    /// its linear model at `step` and its true value along the rollout `x`.
    fn corrected(&self, p: &Problem, step: &QpStep, x: &[StateVector]) -> Subproblem {
        let slb = p.params.state_lower();
        let sub = p.params.state_upper();
        let n = self.n;
        let mut cons = self.cons.clone();
        for (c, kind) in cons.iter_mut().zip(&self.kinds) {
            let actual = match *kind {
                RowKind::Input { .. } | RowKind::Slack { .. } => continue,
                RowKind::Obstacle { i, k } => {
                    let slack = step.z.get(i).copied().unwrap_or(0.0);
                    p.obstacle_constraint(i, k, &x[k], p.cfg.backoff).0 + slack
                }
                RowKind::StateLower { k, m } => x[k][m] - slb[m],
                RowKind::StateUpper { k, m } => sub[m] - x[k][m],
                RowKind::Terminal => {
                    1.0 - TERMINAL_BACKOFF - p.terminal.level(&x[n].fixed_rows::<3>(3).into_owned())
                }
            };
            let model = c.row.dot(&step.raw) - c.rhs;
            c.rhs += model - actual;
        }
        Subproblem {
            h: self.h.clone(),
            g: self.g.clone(),
            cons,
            kinds: self.kinds.clone(),
            n,
        }
    }
}

struct QpStep {
    delta: Vec<Vector3<f64>>,
    z: Vec<f64>,
    max_multiplier: f64,
    /// Full QP solution, inputs then slacks.
    raw: Vec<f64>,
    /// Rows active at the solution.
    active: Vec<usize>,
}

fn build_subproblem(p: &Problem, it: &Iterate, lin: &Linearization, relaxed: bool) -> Subproblem {
    let n = p.n();
    let n_obs = p.obstacles.obstacles.len();
    let n_slack = if relaxed { n_obs } else { 0 };
    let nvar = 3 * n + n_slack;
    let span = p.ub - p.lb;
    let slb = p.params.state_lower();
    let sub = p.params.state_upper();

    let mut sp = Subproblem {
        h: vec![0.0; nvar],
        g: vec![0.0; nvar],
        cons: Vec::new(),
        kinds: Vec::new(),
        n,
    };
    for k in 0..n {
        for m in 0..3 {
            sp.h[3 * k + m] = 2.0 * p.w[m];
            sp.g[3 * k + m] = 2.0 * p.w[m] * (it.u[k][m] - p.u_l[m]);
        }
    }
    for i in 0..n_slack {
        sp.h[3 * n + i] = 1.0;
        sp.g[3 * n + i] = p.cfg.slack_penalty;
    }

    for k in 0..n {
        for m in 0..3 {
            sp.push(
                Row::Unit {
                    index: 3 * k + m,
                    sign: 1.0,
                },
                p.lb[m] - it.u[k][m],
                RowKind::Input { k, m, upper: false },
            );
            sp.push(
                Row::Unit {
                    index: 3 * k + m,
                    sign: -1.0,
                },
                it.u[k][m] - p.ub[m],
                RowKind::Input { k, m, upper: true },
            );
        }
    }
    for i in 0..n_slack {
        sp.push(
            Row::Unit {
                index: 3 * n + i,
                sign: 1.0,
            },
            0.0,
            RowKind::Slack { i },
        );
    }

    for k in 1..=n {
        let xk = it.x[k];
        let ek = lin.e[k];
        let sk = &lin.s[k];
        for i in 0..n_obs {
            let (c, grad) = p.obstacle_constraint(i, k, &xk, p.cfg.backoff);
            let rhs = -c - (grad[0] * ek[0] + grad[1] * ek[1]);
            let coefs = sk.iter().enumerate().map(|(j, sj)| {
                let mut r = [0.0; 3];
                for (m, v) in r.iter_mut().enumerate() {
                    *v = grad[0] * sj[(0, m)] + grad[1] * sj[(1, m)];
                }
                (j, r)
            });
            sp.push_state_row(
                coefs,
                rhs,
                &span,
                relaxed.then_some(3 * n + i),
                RowKind::Obstacle { i, k },
            );
        }
        // Pose and velocity boxes.
        for m in [0, 1, 3, 4, 5] {
            let coefs = || {
                sk.iter()
                    .enumerate()
                    .map(move |(j, sj)| (j, [sj[(m, 0)], sj[(m, 1)], sj[(m, 2)]]))
            };
            if slb[m].is_finite() {
                sp.push_state_row(
                    coefs(),
                    slb[m] - xk[m] - ek[m],
                    &span,
                    None,
                    RowKind::StateLower { k, m },
                );
            }
            if sub[m].is_finite() {
                let neg = coefs().map(|(j, c)| (j, [-c[0], -c[1], -c[2]]));
                sp.push_state_row(
                    neg,
                    xk[m] + ek[m] - sub[m],
                    &span,
                    None,
                    RowKind::StateUpper { k, m },
                );
            }
        }
    }
    // Terminal ellipsoid 1 − νᵀPν ≥ 0, linearised.
    let nu = it.x[n].fixed_rows::<3>(3).into_owned();
    let hval = 1.0 - TERMINAL_BACKOFF - p.terminal.level(&nu);
    let grad = -(p.terminal.p * nu) * 2.0;
    let en = lin.e[n].fixed_rows::<3>(3).into_owned();
    let coefs = lin.s[n].iter().enumerate().map(|(j, sj)| {
        let blk = sj.fixed_view::<3, 3>(3, 0);
        let r = grad.transpose() * blk;
        (j, [r[0], r[1], r[2]])
    });
    sp.push_state_row(coefs, -hval - grad.dot(&en), &span, None, RowKind::Terminal);
    sp
}

/// Relative model decrease below which a feasible iterate is accepted.
const STALL_TOL: f64 = 1e-4;
/// Tightening of the terminal level set inside the QP.
const TERMINAL_BACKOFF: f64 = 0.01;
/// Cap on the exact-penalty weight; degenerate active sets can report
/// arbitrarily large multipliers.
const MAX_PENALTY: f64 = 1e6;
/// Obstacle rows whose linearised clearance exceeds this [m] start outside
/// the QP working set.
const LAZY_MARGIN: f64 = 10.0;
const HARD_SKIP: f64 = 1.0;

struct SqpOutcome {
    it: Iterate,
    iterations: usize,
    /// Merit value of every accepted iterate, starting with the initial one.
    #[cfg_attr(not(test), allow(dead_code))]
    merits: Vec<f64>,
}

fn merit(p: &Problem, it: &Iterate, relaxed: bool, mu: f64) -> f64 {
    let ev = p.evaluate(&it.x, 0.0);
    let mut defects = 0.0;
    for k in 0..p.n() {
        let next = rk4_step_raw(&it.x[k], &it.u[k], &p.dist, p.params, p.cfg.dt);
        defects += (next - it.x[k + 1]).abs().sum();
    }
    let mut v = p.cost(&it.u) + mu * (ev.hard + defects);
    if relaxed {
        v += p.slack_cost(&ev.obstacle);
    } else {
        v += mu * ev.obstacle_sum;
    }
    v
}

/// SQP on the shooting transcription. Trial points close the shooting gaps
/// by rolling out the trial inputs, so every accepted iterate is dynamically
/// consistent. Once an iterate is feasible, trial points must stay feasible;
/// the merit function then reduces to the objective.
fn run_sqp(
    p: &Problem,
    start: Iterate,
    relaxed: bool,
) -> std::result::Result<SqpOutcome, QpFailure> {
    let n = p.n();
    let span = p.ub - p.lb;
    let tol = p.cfg.tolerance;
    let violation = |ev: &Evaluation| ev.hard + if relaxed { 0.0 } else { ev.obstacle_sum };
    let mut it = Iterate {
        x: p.rollout(&start.u),
        u: start.u,
    };
    let mut mu: f64 = 1.0;
    let mut iterations = 0;
    let mut merits = Vec::new();
    let mut active_kinds: Vec<RowKind> = Vec::new();
    while iterations < p.cfg.max_sqp_iterations {
        iterations += 1;
        let lin = linearize(p, &it);
        let sp = build_subproblem(p, &it, &lin, relaxed);
        let step = sp.solve(&sp.indices_of(&active_kinds))?;
        active_kinds = step.active.iter().map(|&j| sp.kinds[j]).collect();
        mu = mu.max((1.5 * step.max_multiplier + 1e-3).min(MAX_PENALTY));

        // Decrease of the merit predicted by the QP model.
        let mut model = 0.0;
        for k in 0..n {
            for m in 0..3 {
                let d = step.delta[k][m];
                model += p.w[m] * d * (2.0 * (it.u[k][m] - p.u_l[m]) + d);
            }
        }
        let ev = p.evaluate(&it.x, 0.0);
        let defect_sum: f64 = lin.defects.iter().map(|d| d.abs().sum()).sum();
        model -= mu * (ev.hard + defect_sum);
        if relaxed {
            model += p.slack_cost(&step.z) - p.slack_cost(&ev.obstacle);
        } else {
            model -= mu * ev.obstacle_sum;
        }

        let step_norm = step
            .delta
            .iter()
            .map(|d| d.component_div(&span).amax())
            .fold(0.0, f64::max);
        let feasible = violation(&ev) <= tol;
        let phi0 = merit(p, &it, relaxed, mu);
        if merits.is_empty() {
            merits.push(phi0);
        }
        let objective = p.cost(&it.u)
            + if relaxed {
                p.slack_cost(&ev.obstacle)
            } else {
                0.0
            };
        if feasible && (step_norm < 1e-6 || -model <= STALL_TOL * (1.0 + objective)) {
            break;
        }
        if model.abs() < 1e-10 {
            break;
        }

        let acceptable = |trial: &Iterate, phi: f64, alpha: f64| {
            (!feasible || violation(&p.evaluate(&trial.x, 0.0)) <= tol)
                && phi <= phi0 + 1e-4 * alpha * model.min(0.0)
        };
        let trial_at = |delta: &[Vector3<f64>], alpha: f64| {
            let u: Vec<Vector3<f64>> =
                it.u.iter()
                    .zip(delta)
                    .map(|(u, d)| (u + d * alpha).sup(&p.lb).inf(&p.ub))
                    .collect();
            Iterate {
                x: p.rollout(&u),
                u,
            }
        };

        let full = trial_at(&step.delta, 1.0);
        let phi_full = merit(p, &full, relaxed, mu);
        let mut alpha = 1.0;
        let mut accepted = None;
        if acceptable(&full, phi_full, 1.0) {
            accepted = Some((full, phi_full));
        } else if let Ok(soc) = sp.corrected(p, &step, &full.x).solve(&step.active) {
            let trial = trial_at(&soc.delta, 1.0);
            let phi = merit(p, &trial, relaxed, mu);
            if acceptable(&trial, phi, 1.0) {
                accepted = Some((trial, phi));
            }
        }
        if accepted.is_none() {
            for _ in 0..11 {
                alpha *= 0.5;
                let trial = trial_at(&step.delta, alpha);
                let phi = merit(p, &trial, relaxed, mu);
                if acceptable(&trial, phi, alpha) {
                    accepted = Some((trial, phi));
                    break;
                }
            }
        }
        match accepted {
            Some((next, phi)) => {
                it = next;
                merits.push(phi);
                if step_norm * alpha < 1e-9 {
                    break;
                }
            }
            None => break,
        }
    }
    Ok(SqpOutcome {
        it,
        iterations,
        merits,
    })
}

pub(crate) fn to_states(x: &[StateVector]) -> Vec<VesselState> {
    x.iter().map(VesselState::from_vector).collect()
}

/// Solves the safety OCP for one tick. `warm` is the previous solution, if
/// any; its inputs are shifted by the number of whole steps elapsed.
#[allow(clippy::too_many_arguments)]
pub fn filter_control(
    time: f64,
    state: &VesselState,
    u_l: &ControlInput,
    obstacles: &ObstacleForecast,
    dist: &Disturbance,
    cfg: &PsfConfig,
    terminal: &TerminalSet,
    params: &VesselParams,
    warm: Option<&WarmStart>,
) -> OcpSolution {
    let started = Instant::now();
    let n = cfg.horizon;
    let lb = params.input_lower().to_vector();
    let ub = params.input_upper().to_vector();
    let u_l = u_l.to_vector().sup(&lb).inf(&ub);
    let u_l = if u_l.iter().all(|v| v.is_finite()) {
        u_l
    } else {
        Vector3::zeros()
    };
    let dist = match cfg.disturbance_mode {
        DisturbanceMode::Known => dist.to_vector(),
        DisturbanceMode::Zero => Vector3::zeros(),
    };
    let p = Problem {
        params,
        cfg,
        terminal,
        obstacles,
        u_l,
        dist,
        w: cfg.input_weights(params),
        lb,
        ub,
        x0: state.to_vector(),
    };

    let finish = |it: &Iterate, status: PsfStatus, iterations: usize, ev: &Evaluation| {
        let u0_seq: Vec<ControlInput> = it.u.iter().map(ControlInput::from_vector).collect();
        OcpSolution {
            delta_u: ControlInput::from_vector(&(u_l - it.u[0])),
            x_seq: to_states(&it.x),
            cost: p.cost(&it.u),
            slack_total: ev.obstacle_sum,
            max_violation: ev.hard_max.max(if status == PsfStatus::Relaxed {
                0.0
            } else {
                ev.obstacle.iter().copied().fold(0.0, f64::max)
            }),
            u0_seq,
            status,
            iterations,
            solve_time: started.elapsed(),
        }
    };

    // Passthrough: the held learning input is already safe.
    let held = vec![u_l; n];
    let held_x = p.rollout(&held);
    let held_ev = p.evaluate(&held_x, 0.0);
    if held_ev.hard_max <= 0.0 && held_ev.obstacle_sum <= 0.0 {
        return finish(
            &Iterate { u: held, x: held_x },
            PsfStatus::SafePassthrough,
            0,
            &held_ev,
        );
    }

    let start = warm_start(&p, warm, time).unwrap_or(Iterate {
        u: vec![u_l; n],
        x: held_x,
    });

    let tol = cfg.tolerance;
    let mut total_iters = 0;
    // A start that already needs slack rarely reaches hard feasibility
    // within the iteration budget, so go straight to the relaxed problem.
    let start_ev = p.evaluate(&p.rollout(&start.u), 0.0);
    let skip_hard = start_ev.obstacle.iter().any(|v| *v > HARD_SKIP);
    let hard = if skip_hard {
        None
    } else {
        run_sqp(&p, start.clone(), false).ok()
    };
    if let Some(out) = hard {
        total_iters += out.iterations;
        let x = p.rollout(&out.it.u);
        let ev = p.evaluate(&x, 0.0);
        if ev.hard_max <= tol && ev.obstacle.iter().all(|v| *v <= tol) {
            let it = Iterate { u: out.it.u, x };
            return finish(&it, PsfStatus::Modified, total_iters, &ev);
        }
    }

    let relaxed_start = start;
    match run_sqp(&p, relaxed_start.clone(), true) {
        Ok(out) => {
            total_iters += out.iterations;
            let x = p.rollout(&out.it.u);
            let ev = p.evaluate(&x, 0.0);
            let it = Iterate { u: out.it.u, x };
            let status = if ev.hard_max > tol {
                PsfStatus::Infeasible
            } else if ev.obstacle.iter().all(|v| *v <= tol) {
                PsfStatus::Modified
            } else {
                PsfStatus::Relaxed
            };
            finish(&it, status, total_iters, &ev)
        }
        Err(_) => {
            let x = p.rollout(&relaxed_start.u);
            let ev = p.evaluate(&x, 0.0);
            let it = Iterate {
                u: relaxed_start.u,
                x,
            };
            finish(&it, PsfStatus::Infeasible, total_iters, &ev)
        }
    }
}

fn warm_start(p: &Problem, warm: Option<&WarmStart>, time: f64) -> Option<Iterate> {
    let warm = warm?;
    let n = p.n();
    if warm.u.len() != n || warm.x.len() != n + 1 {
        return None;
    }
    let elapsed = time - warm.time;
    if !(elapsed >= 0.0) {
        return None;
    }
    let shift = ((elapsed / p.cfg.dt) + 1e-9).floor() as usize;
    if shift >= n {
        return None;
    }
    let u: Vec<Vector3<f64>> = (0..n).map(|k| warm.u[(k + shift).min(n - 1)]).collect();
    let mut x: Vec<StateVector> = (0..=n - shift).map(|k| warm.x[k + shift]).collect();
    // Align the heading branch with the current state.
    let turns = ((p.x0[2] - x[0][2]) / std::f64::consts::TAU).round();
    for xk in &mut x {
        xk[2] += turns * std::f64::consts::TAU;
    }
    x[0] = p.x0;
    while x.len() < n + 1 {
        let k = x.len() - 1;
        let next = rk4_step_raw(&x[k], &u[k], &p.dist, p.params, p.cfg.dt);
        x.push(next);
    }
    Some(Iterate { u, x })
}

/// Stateful filter for one vessel: keeps the terminal set and the warm
/// start between ticks.
#[derive(Debug, Clone)]
pub struct SafetyFilter {
    params: VesselParams,
    cfg: PsfConfig,
    terminal: TerminalSet,
    warm: Option<WarmStart>,
}

impl SafetyFilter {
    pub fn new(params: VesselParams, cfg: PsfConfig) -> Result<Self> {
        cfg.validate()?;
        let terminal = super::terminal::build_terminal_set(&params, cfg.dt, &cfg.terminal)?;
        Ok(Self {
            params,
            cfg,
            terminal,
            warm: None,
        })
    }

    pub fn with_terminal(
        params: VesselParams,
        cfg: PsfConfig,
        terminal: TerminalSet,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            params,
            cfg,
            terminal,
            warm: None,
        })
    }

    pub fn config(&self) -> &PsfConfig {
        &self.cfg
    }

    pub fn terminal(&self) -> &TerminalSet {
        &self.terminal
    }

    pub fn warm_start(&self) -> Option<&WarmStart> {
        self.warm.as_ref()
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn filter(
        &mut self,
        time: f64,
        state: &VesselState,
        u_l: &ControlInput,
        obstacles: &ObstacleForecast,
        dist: &Disturbance,
    ) -> OcpSolution {
        let sol = filter_control(
            time,
            state,
            u_l,
            obstacles,
            dist,
            &self.cfg,
            &self.terminal,
            &self.params,
            self.warm.as_ref(),
        );
        // Keep the unwrapped heading branch of the new plan.
        let mut x: Vec<StateVector> = Vec::with_capacity(sol.x_seq.len());
        let mut prev = state.psi;
        for s in &sol.x_seq {
            let mut v = s.to_vector();
            v[2] = prev + crate::angle::angle_diff(v[2], prev);
            prev = v[2];
            x.push(v);
        }
        self.warm = Some(WarmStart {
            time,
            u: sol.u0_seq.iter().map(|u| u.to_vector()).collect(),
            x,
        });
        sol
    }
}

/// Defect of a returned trajectory under the RK4 dynamics.
pub fn dynamics_defect(
    sol: &OcpSolution,
    params: &VesselParams,
    dist: &Disturbance,
    dt: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..sol.u0_seq.len() {
        let x = sol.x_seq[k].to_vector();
        let next = rk4_step_raw(
            &x,
            &sol.u0_seq[k].to_vector(),
            &dist.to_vector(),
            params,
            dt,
        );
        let mut d = next - sol.x_seq[k + 1].to_vector();
        d[2] = crate::angle::wrap_to_pi(d[2]);
        worst = worst.max(d.amax());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::ObstaclePrediction;

    fn setup() -> (VesselParams, PsfConfig, TerminalSet) {
        let params = VesselParams::default();
        let cfg = PsfConfig::default();
        let terminal = crate::safety::build_terminal_set(&params, cfg.dt, &cfg.terminal).unwrap();
        (params, cfg, terminal)
    }

    fn cruise_state() -> VesselState {
        VesselState::new(0.0, 0.0, 0.0, 0.8, 0.0, 0.0)
    }

    fn cruise_input(params: &VesselParams) -> ControlInput {
        // Thrust holding 0.8 m/s surge at equilibrium.
        let d = params.damping(&Vector3::new(0.8, 0.0, 0.0));
        ControlInput::new(d[(0, 0)] * 0.8, 0.0, 0.0)
    }

    #[test]
    fn passthrough_without_obstacles() {
        let (params, cfg, terminal) = setup();
        let u = cruise_input(&params);
        let sol = filter_control(
            0.0,
            &cruise_state(),
            &u,
            &ObstacleForecast::default(),
            &Disturbance::zero(),
            &cfg,
            &terminal,
            &params,
            None,
        );
        assert_eq!(sol.status, PsfStatus::SafePassthrough);
        assert_eq!(sol.u0(), u);
        assert_eq!(sol.delta_u.norm(), 0.0);
        assert_eq!(sol.x_seq.len(), cfg.horizon + 1);
    }

    fn head_on_at(x: f64) -> ObstacleForecast {
        let (_, cfg, _) = setup();
        ObstacleForecast::new(vec![ObstaclePrediction::constant_velocity(
            [x, 0.5],
            [0.0, 0.0],
            5.0,
            cfg.horizon,
            cfg.dt,
        )])
    }

    #[test]
    fn head_on_is_modified_and_safe() {
        let (params, cfg, terminal) = setup();
        let obstacles = head_on_at(35.0);
        let u = cruise_input(&params);
        let sol = filter_control(
            0.0,
            &cruise_state(),
            &u,
            &obstacles,
            &Disturbance::zero(),
            &cfg,
            &terminal,
            &params,
            None,
        );
        assert_eq!(sol.status, PsfStatus::Modified, "{sol:?}");
        assert!(sol.delta_u.norm() > 0.0);
        let report = safety_margin_report(&sol.x_seq, &obstacles, cfg.d_safe);
        assert!(
            report.margins[1..].iter().all(|m| *m >= -1e-6),
            "{:?}",
            report.margins
        );
        assert!(dynamics_defect(&sol, &params, &Disturbance::zero(), cfg.dt) <= 1e-6);
        let nu = sol.x_seq[cfg.horizon].nu();
        assert!(terminal.level(&nu) <= 1.0 + 1e-6);
        for u in &sol.u0_seq {
            assert!(u.tau_u >= -4.0 - 1e-9 && u.tau_u <= 8.0 + 1e-9);
        }
    }

    #[test]
    fn unsafe_hold_is_detected_by_margin_report() {
        let (params, cfg, _) = setup();
        let obstacles = head_on_at(35.0);
        let mut x = vec![cruise_state()];
        let u = cruise_input(&params);
        for _ in 0..cfg.horizon {
            let s = crate::vessel::step_rk4(
                x.last().unwrap(),
                &u,
                &Disturbance::zero(),
                &params,
                cfg.dt,
            )
            .unwrap();
            x.push(s);
        }
        let report = safety_margin_report(&x, &obstacles, cfg.d_safe);
        // Margin crosses zero once 35 − x < 25 (the 0.5 m offset is negligible).
        let k = report.first_violation.unwrap();
        assert!(
            x[k].x > 10.0 && x[k - 1].x <= 10.01,
            "{} {}",
            x[k - 1].x,
            x[k].x
        );
    }

    #[test]
    fn solves_are_deterministic() {
        let (params, cfg, terminal) = setup();
        let obstacles = head_on_at(35.0);
        let u = cruise_input(&params);
        let run = || {
            filter_control(
                0.0,
                &cruise_state(),
                &u,
                &obstacles,
                &Disturbance::zero(),
                &cfg,
                &terminal,
                &params,
                None,
            )
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn warm_start_shift_repeats_tail() {
        let (params, cfg, terminal) = setup();
        let mut filter = SafetyFilter::with_terminal(params.clone(), cfg, terminal).unwrap();
        let obstacles = head_on_at(35.0);
        let u = cruise_input(&params);
        let first = filter.filter(0.0, &cruise_state(), &u, &obstacles, &Disturbance::zero());
        assert_eq!(first.status, PsfStatus::Modified);
        let next_state = first.x_seq[1];
        let second = filter.filter(0.5, &next_state, &u, &obstacles, &Disturbance::zero());
        assert!(matches!(
            second.status,
            PsfStatus::Modified | PsfStatus::SafePassthrough
        ));
        let report = safety_margin_report(&second.x_seq, &obstacles, cfg.d_safe);
        assert!(report.margins.iter().all(|m| *m >= -1e-6));
    }

    #[test]
    fn relaxed_when_obstacle_unavoidable() {
        let (params, cfg, terminal) = setup();
        // Vessel already inside the safety radius.
        let obstacles = ObstacleForecast::new(vec![ObstaclePrediction::constant_velocity(
            [10.0, 0.0],
            [0.0, 0.0],
            5.0,
            cfg.horizon,
            cfg.dt,
        )]);
        let u = cruise_input(&params);
        let sol = filter_control(
            0.0,
            &cruise_state(),
            &u,
            &obstacles,
            &Disturbance::zero(),
            &cfg,
            &terminal,
            &params,
            None,
        );
        assert_eq!(sol.status, PsfStatus::Relaxed);
        assert!(sol.slack_total > 0.0);
    }

    #[test]
    fn merit_is_non_increasing() {
        let (params, cfg, terminal) = setup();
        let u_l = cruise_input(&params).to_vector();
        for (x_obs, relaxed) in [(35.0, true), (45.0, false), (50.0, false)] {
            let obstacles = head_on_at(x_obs);
            let p = Problem {
                params: &params,
                cfg: &cfg,
                terminal: &terminal,
                obstacles: &obstacles,
                u_l,
                dist: Vector3::zeros(),
                w: cfg.input_weights(&params),
                lb: params.input_lower().to_vector(),
                ub: params.input_upper().to_vector(),
                x0: cruise_state().to_vector(),
            };
            let start = Iterate {
                u: vec![u_l; cfg.horizon],
                x: Vec::new(),
            };
            let out = run_sqp(&p, start, relaxed).unwrap();
            assert!(out.merits.len() >= 2, "{x_obs}");
            for w in out.merits.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{:?}", out.merits);
            }
        }
    }

    #[test]
    fn condensed_sensitivities_match_rollouts() {
        let (params, cfg, terminal) = setup();
        let obstacles = ObstacleForecast::default();
        let u_l = cruise_input(&params).to_vector();
        let p = Problem {
            params: &params,
            cfg: &cfg,
            terminal: &terminal,
            obstacles: &obstacles,
            u_l,
            dist: Vector3::new(0.3, -0.2, 0.1),
            w: cfg.input_weights(&params),
            lb: params.input_lower().to_vector(),
            ub: params.input_upper().to_vector(),
            x0: VesselState::new(3.0, -2.0, 0.4, 0.7, 0.1, 0.05).to_vector(),
        };
        let u: Vec<Vector3<f64>> = (0..cfg.horizon)
            .map(|k| {
                u_l + Vector3::new(
                    0.5 * (k as f64 * 0.3).sin(),
                    0.2,
                    0.3 * (k as f64 * 0.2).cos(),
                )
            })
            .collect();
        let it = Iterate {
            x: p.rollout(&u),
            u,
        };
        let lin = linearize(&p, &it);
        // Linearisation error of x_k after perturbing all inputs by `scale`.
        let error = |scale: f64| -> Vec<f64> {
            let delta: Vec<Vector3<f64>> = (0..cfg.horizon)
                .map(|k| Vector3::new(1.0, -0.5, 0.3) * (scale * (1.0 + (k % 3) as f64)))
                .collect();
            let moved: Vec<Vector3<f64>> = it.u.iter().zip(&delta).map(|(u, d)| u + d).collect();
            let x1 = p.rollout(&moved);
            (1..=cfg.horizon)
                .map(|k| {
                    let mut pred = lin.e[k];
                    for (j, sj) in lin.s[k].iter().enumerate() {
                        pred += sj * delta[j];
                    }
                    (x1[k] - it.x[k] - pred).amax()
                })
                .collect()
        };
        let coarse = error(1e-3);
        let fine = error(1e-4);
        for (k, (c, f)) in coarse.iter().zip(&fine).enumerate() {
            // Second-order remainder: a tenth of the step gives a hundredth
            // of the error.
            if *c > 1e-9 {
                let ratio = c / f;
                assert!((60.0..160.0).contains(&ratio), "k {}: ratio {ratio}", k + 1);
            }
        }
    }

    #[test]
    fn status_serialises_screaming_snake() {
        assert_eq!(
            serde_json::to_string(&PsfStatus::SafePassthrough).unwrap(),
            "\"SAFE_PASSTHROUGH\""
        );
        assert_eq!(PsfStatus::Infeasible.as_str(), "INFEASIBLE");
    }
}
