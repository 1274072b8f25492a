//! Dense active-set solver for the per-step velocity program.
//!
//! Each planner step solves
//!
//! ```text
//!     min   qd' R qd + sum_i w_i s_i^2          R = r * I
//!     s.t.  lo_i <= g_i' qd + s_i <= up_i       (soft rows)
//!           lo_i <= g_i' qd       <= up_i       (hard rows)
//! ```
//!
//! over the stacked variable `x = (qd, s)`. The Hessian is diagonal and
//! strictly positive, so the program is strictly convex with a unique
//! minimizer. The solver is a dual active-set method: it starts from the
//! unconstrained minimum `x = 0`, repeatedly adds the most violated
//! inequality and resolves the dense KKT system of the active set, dropping
//! constraints whose multipliers would go negative. An inconsistent set of
//! hard rows is reported as [`QpError::InfeasibleHard`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// What produced a constraint row; used for diagnostics and row counting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// Drives one component of the object (or tool) pose error to zero.
    Goal,
    /// Keeps the grasp-point-to-CoG vector aligned with gravity.
    Verticality,
    /// Drives the virtual joint position to a requested angle.
    PivotAngle,
    /// Pins the virtual joint rate to zero when pivoting is disabled.
    PivotLock,
    /// Keeps a proximity pair separated.
    Collision,
    /// Hard bound on one joint rate.
    VelocityLimit,
    /// Hard rate bound keeping a joint inside its position limits.
    PositionLimit,
}

/// One scalar task-function row `e(q)` with rate bounds.
#[derive(Clone, Debug)]
pub struct ConstraintRow {
    pub name: String,
    pub kind: RowKind,
    /// Current task-function value, carried for diagnostics.
    pub value: f64,
    /// Row gradient de/dq.
    pub gradient: DVector<f64>,
    /// Bounds on the task-function rate.
    pub lower: f64,
    pub upper: f64,
    /// Slack penalty; larger means higher priority. Ignored for hard rows.
    pub weight: f64,
    /// Hard rows get no slack variable.
    pub hard: bool,
}

impl ConstraintRow {
    pub fn validate(&self, dof: usize) -> Result<(), QpError> {
        if self.gradient.len() != dof {
            return Err(QpError::BadRow {
                row: self.name.clone(),
                what: format!("gradient has {} entries, expected {dof}", self.gradient.len()),
            });
        }
        if !(self.lower <= self.upper) {
            return Err(QpError::BadRow {
                row: self.name.clone(),
                what: format!("lower bound {} above upper bound {}", self.lower, self.upper),
            });
        }
        if !self.hard && !self.weight.is_finite() {
            return Err(QpError::BadRow {
                row: self.name.clone(),
                what: String::from("soft rows need a finite weight"),
            });
        }
        Ok(())
    }
}

/// Solution of one velocity program.
#[derive(Clone, Debug)]
pub struct QpSolution {
    /// Joint velocities (first `dof` variables).
    pub qdot: DVector<f64>,
    /// Slack values, one per soft row in input order.
    pub slacks: Vec<f64>,
    /// Constraint additions performed by the active-set loop.
    pub iterations: usize,
    /// Objective value at the minimizer.
    pub objective: f64,
}

#[derive(Clone, Debug, Error)]
pub enum QpError {
    #[error("row {row}: {what}")]
    BadRow { row: String, what: String },
    #[error("hard constraint set is infeasible")]
    InfeasibleHard,
    #[error("active-set iteration limit reached")]
    IterationLimit,
    #[error("singular KKT system")]
    Numerical,
}

/// Default Tikhonov regularization on the joint rates.
pub const DEFAULT_REGULARIZATION: f64 = 1e-3;

/// Weights below this are clamped so the Hessian stays strictly positive.
const MIN_WEIGHT: f64 = 1e-9;

const FEAS_TOL: f64 = 1e-10;

struct Inequality {
    /// Constraint normal in stacked (qd, s) space, scaled so that it reads
    /// `a' x >= b`.
    a: DVector<f64>,
    b: f64,
    norm: f64,
    /// Equality rows stay active forever and skip the dual ratio test.
    equality: bool,
}

/// Solve one velocity program. `dof` is the number of joint-rate variables;
/// `regularization` is the diagonal weight on them.
pub fn solve_step(
    rows: &[ConstraintRow],
    dof: usize,
    regularization: f64,
) -> Result<QpSolution, QpError> {
    for row in rows {
        row.validate(dof)?;
    }
    let soft: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].hard).collect();
    let n = dof + soft.len();

    // Diagonal of the half-form Hessian (objective = 1/2 x' H x).
    let mut hdiag = DVector::from_element(n, 2.0 * regularization.max(MIN_WEIGHT));
    for (k, &i) in soft.iter().enumerate() {
        hdiag[dof + k] = 2.0 * rows[i].weight.max(MIN_WEIGHT);
    }

    let mut ineqs: Vec<Inequality> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let mut a = DVector::zeros(n);
        for j in 0..dof {
            a[j] = row.gradient[j];
        }
        if let Some(k) = soft.iter().position(|&s| s == i) {
            a[dof + k] = 1.0;
        }
        let norm = a.norm();
        if norm < 1e-12 {
            // A zero row constrains nothing the solver can act on; feasible
            // bounds make it vacuous, infeasible ones have no remedy.
            if row.hard && (row.lower > FEAS_TOL || row.upper < -FEAS_TOL) {
                return Err(QpError::InfeasibleHard);
            }
            continue;
        }
        if row.hard && row.lower == row.upper {
            ineqs.push(Inequality {
                a,
                b: row.lower,
                norm,
                equality: true,
            });
            continue;
        }
        if row.lower.is_finite() {
            ineqs.push(Inequality {
                a: a.clone(),
                b: row.lower,
                norm,
                equality: false,
            });
        }
        if row.upper.is_finite() {
            ineqs.push(Inequality {
                a: -a,
                b: -row.upper,
                norm,
                equality: false,
            });
        }
    }

    let mut x = DVector::<f64>::zeros(n);
    let mut active: Vec<usize> = Vec::new();
    // Constraints found linearly dependent on the active set with a
    // negligible residual; re-scanning them would loop forever.
    let mut dependent: Vec<usize> = Vec::new();
    let mut multipliers: Vec<f64> = Vec::new();

    // Equalities enter the active set first and never leave.
    let order: Vec<usize> = (0..ineqs.len())
        .filter(|&i| ineqs[i].equality)
        .chain((0..ineqs.len()).filter(|&i| !ineqs[i].equality))
        .collect();

    let iter_limit = 60 + 12 * ineqs.len();
    let mut additions = 0usize;

    loop {
        // Most violated constraint, scaled by the row norm. Equalities are
        // violated by any deviation in either direction.
        let mut worst = FEAS_TOL;
        let mut pick: Option<(usize, f64)> = None;
        for &i in &order {
            if active.contains(&i) || dependent.contains(&i) {
                continue;
            }
            let ineq = &ineqs[i];
            let residual = ineq.a.dot(&x) - ineq.b;
            let violation = if ineq.equality {
                residual.abs()
            } else {
                -residual
            } / ineq.norm;
            if violation > worst {
                worst = violation;
                // For a violated equality approach from the violated side.
                let sign = if ineq.equality && residual > 0.0 { -1.0 } else { 1.0 };
                pick = Some((i, sign));
            }
        }
        let Some((p, sign)) = pick else {
            break;
        };

        // Direction of the constraint as it will be driven to equality.
        let ap: DVector<f64> = &ineqs[p].a * sign;
        let bp = ineqs[p].b * sign;
        let mut u_p = 0.0f64;

        loop {
            additions += 1;
            if additions > iter_limit {
                return Err(QpError::IterationLimit);
            }

            let m = active.len();
            // KKT system of the current active set for the incoming normal.
            let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
            for j in 0..n {
                kkt[(j, j)] = hdiag[j];
            }
            for (r, &ci) in active.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = ineqs[ci].a[j];
                    kkt[(j, n + r)] = ineqs[ci].a[j];
                }
            }
            let mut rhs = DVector::<f64>::zeros(n + m);
            for j in 0..n {
                rhs[j] = ap[j];
            }
            let lu = kkt.full_piv_lu();
            let sol = lu.solve(&rhs).ok_or(QpError::Numerical)?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(QpError::Numerical);
            }
            let z = sol.rows(0, n).into_owned();
            let rates: Vec<f64> = (0..m).map(|r| sol[n + r]).collect();

            // Dual step length: first active inequality whose multiplier
            // would cross zero.
            let mut t1 = f64::INFINITY;
            let mut drop_idx = None;
            for (r, &ci) in active.iter().enumerate() {
                if ineqs[ci].equality {
                    continue;
                }
                if rates[r] > 1e-11 {
                    let t = multipliers[r] / rates[r];
                    if t < t1 {
                        t1 = t;
                        drop_idx = Some(r);
                    }
                }
            }

            // Primal step length: how far until the incoming constraint is
            // satisfied with equality.
            let curvature = ap.dot(&z);
            let slack = bp - ap.dot(&x);
            let t2 = if curvature > 1e-12 * ineqs[p].norm * ineqs[p].norm {
                slack / curvature
            } else {
                f64::INFINITY
            };

            if !t1.is_finite() && !t2.is_finite() {
                // No curvature along the incoming normal and no multiplier
                // to trade: the constraint is linearly dependent on the
                // active set. A tiny residual violation is numerical noise;
                // anything larger is a true inconsistency.
                if slack.abs() < 1e-7 * ineqs[p].norm {
                    dependent.push(p);
                    break;
                }
                return Err(QpError::InfeasibleHard);
            }
            let t = t1.min(t2);
            if !t.is_finite() || t > 1e12 {
                return Err(QpError::Numerical);
            }

            x += &z * t;
            for (r, rate) in rates.iter().enumerate() {
                multipliers[r] -= t * rate;
            }
            u_p += t;

            if t2 <= t1 {
                active.push(p);
                multipliers.push(u_p);
                // The primal point moved, so earlier dependence verdicts are
                // stale.
                dependent.clear();
                break;
            }
            let r = drop_idx.expect("finite t1 implies a droppable constraint");
            active.remove(r);
            multipliers.remove(r);
        }
    }

    let qdot = x.rows(0, dof).into_owned();
    let slacks: Vec<f64> = (0..soft.len()).map(|k| x[dof + k]).collect();
    let objective = 0.5 * x.iter().zip(hdiag.iter()).map(|(xi, h)| h * xi * xi).sum::<f64>();
    Ok(QpSolution {
        qdot,
        slacks,
        iterations: additions,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use alloc::vec;

    fn soft(name: &str, g: &[f64], lower: f64, upper: f64, weight: f64) -> ConstraintRow {
        ConstraintRow {
            name: name.into(),
            kind: RowKind::Goal,
            value: 0.0,
            gradient: DVector::from_row_slice(g),
            lower,
            upper,
            weight,
            hard: false,
        }
    }

    fn hard(name: &str, g: &[f64], lower: f64, upper: f64) -> ConstraintRow {
        ConstraintRow {
            name: name.into(),
            kind: RowKind::VelocityLimit,
            value: 0.0,
            gradient: DVector::from_row_slice(g),
            lower,
            upper,
            weight: 0.0,
            hard: true,
        }
    }

    #[test]
    fn single_soft_row_minimum_norm() {
        // One achievable row: up to the small rate regularization the slack
        // vanishes and qdot is the minimum-norm solution g (g'g)^-1 target.
        // Exact values: qd = g t / (g'g + r/w), s = (r/w) t / (g'g + r/w).
        let g = [1.0, 2.0];
        let target = 2.0;
        let (r, w) = (1e-3, 5.0);
        let rows = vec![soft("row", &g, target, f64::INFINITY, w)];
        let sol = solve_step(&rows, 2, r).unwrap();
        let gg = 5.0;
        let denom = gg + r / w;
        assert_relative_eq!(sol.slacks[0], (r / w) * target / denom, epsilon = 1e-10);
        assert_relative_eq!(sol.qdot[0], g[0] * target / denom, epsilon = 1e-10);
        assert_relative_eq!(sol.qdot[1], g[1] * target / denom, epsilon = 1e-10);
        // Which is the minimum-norm solution to within the regularization.
        assert_relative_eq!(sol.qdot[0], g[0] * target / gg, epsilon = 1e-3);
        assert_relative_eq!(sol.qdot[1], g[1] * target / gg, epsilon = 1e-3);
        assert!(sol.slacks[0].abs() < 1e-3);
    }

    #[test]
    fn conflicting_soft_rows_split_by_weight() {
        // Two equality-style rows pulling one variable to +1 and -1 with
        // weights 10 and 1. Closed form: qd = (w1 a + w2 b) / (r + w1 + w2),
        // residual magnitudes in ratio w2 : w1.
        let r = 1e-3;
        let (w1, w2) = (10.0, 1.0);
        let (a, b) = (1.0, -1.0);
        let rows = vec![
            soft("heavy", &[1.0], a, a, w1),
            soft("light", &[1.0], b, b, w2),
        ];
        let sol = solve_step(&rows, 1, r).unwrap();
        let expected = (w1 * a + w2 * b) / (r + w1 + w2);
        assert_relative_eq!(sol.qdot[0], expected, epsilon = 1e-9);
        let res_heavy = (sol.qdot[0] - a).abs();
        let res_light = (sol.qdot[0] - b).abs();
        assert_relative_eq!(res_heavy / res_light, w2 / w1, epsilon = 2e-3);
    }

    #[test]
    fn hard_rows_are_respected_exactly() {
        let rows = vec![
            soft("pull", &[1.0, 0.0], 3.0, 3.0, 100.0),
            hard("cap", &[1.0, 0.0], -0.5, 0.5),
        ];
        let sol = solve_step(&rows, 2, 1e-3).unwrap();
        assert!(sol.qdot[0] <= 0.5 + 1e-8);
        assert_relative_eq!(sol.qdot[0], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn infeasible_hard_rows_are_detected() {
        let rows = vec![
            hard("ge", &[1.0], 1.0, f64::INFINITY),
            hard("le", &[1.0], f64::NEG_INFINITY, -1.0),
        ];
        match solve_step(&rows, 1, 1e-3) {
            Err(QpError::InfeasibleHard) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn hard_equality_row_is_pinned() {
        let rows = vec![
            soft("pull", &[1.0, 1.0], 2.0, 2.0, 10.0),
            hard("lock", &[0.0, 1.0], 0.0, 0.0),
        ];
        let sol = solve_step(&rows, 2, 1e-3).unwrap();
        assert_relative_eq!(sol.qdot[1], 0.0, epsilon = 1e-10);
        assert!(sol.qdot[0] > 1.0);
    }

    #[test]
    fn scaling_all_penalties_preserves_argmin() {
        // Uniform positive scaling of every penalty (slack weights and the
        // rate regularization alike) scales the objective but not the
        // minimizer.
        let rows = |s: f64| {
            vec![
                soft("a", &[1.0, 0.3, -0.2], 1.0, 1.0, 12.0 * s),
                soft("b", &[0.1, -1.0, 0.5], -0.4, 0.2, 3.0 * s),
                soft("c", &[0.0, 0.4, 1.0], 0.3, 0.9, 7.0 * s),
                hard("h", &[1.0, 0.0, 0.0], -0.6, 0.6),
            ]
        };
        let base = solve_step(&rows(1.0), 3, 1e-3).unwrap();
        let scaled = solve_step(&rows(37.5), 3, 1e-3 * 37.5).unwrap();
        for j in 0..3 {
            assert_relative_eq!(base.qdot[j], scaled.qdot[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_gradient_infeasible_hard_row_is_reported() {
        let rows = vec![hard("impossible", &[0.0, 0.0], 0.5, f64::INFINITY)];
        assert!(matches!(
            solve_step(&rows, 2, 1e-3),
            Err(QpError::InfeasibleHard)
        ));
    }

    #[test]
    fn bad_bounds_are_rejected() {
        let rows = vec![soft("bad", &[1.0], 1.0, -1.0, 1.0)];
        assert!(matches!(solve_step(&rows, 1, 1e-3), Err(QpError::BadRow { .. })));
    }
}
