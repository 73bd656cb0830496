//! Unconstrained and projected quasi-Newton minimization.
//!
//! Limited-memory BFGS with Armijo backtracking. The projected variant
//! re-projects iterates onto a constraint manifold after each step and works
//! with tangentially projected gradients, so convergence is judged on the
//! feasible directions only.

use std::collections::VecDeque;

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub iterations: usize,
    pub value: f64,
    /// Infinity norm of the (projected) gradient at the final iterate.
    pub grad_norm: f64,
    pub converged: bool,
    /// Greatest single-iteration increase of the objective (0 for monotone
    /// runs; line search guarantees descent up to roundoff).
    pub worst_increase: f64,
}

pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Convergence threshold on the infinity norm of the projected gradient.
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-8,
            memory: 10,
        }
    }
}

/// Constraint handling for [`lbfgs`].
pub trait Constraint {
    /// Map a point back onto the feasible set (identity on feasible points).
    fn project_point(&mut self, x: &mut [f64]);
    /// Project a direction at the feasible point `x` onto the tangent space
    /// of the constraint set.
    fn project_direction(&mut self, x: &[f64], dir: &mut [f64]);
}

/// The unconstrained case.
pub struct Unconstrained;

impl Constraint for Unconstrained {
    fn project_point(&mut self, _x: &mut [f64]) {}
    fn project_direction(&mut self, _x: &[f64], _dir: &mut [f64]) {}
}

/// Minimize `eval` starting from `x` subject to `constraint`.
///
/// `eval` writes the ambient gradient into its second argument and returns
/// the objective value.
pub fn lbfgs<F, C>(x: &mut [f64], mut eval: F, constraint: &mut C, opts: &LbfgsOptions) -> MinimizeReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    C: Constraint,
{
    let n = x.len();
    constraint.project_point(x);
    let mut grad = vec![0.0; n];
    let mut value = eval(x, &mut grad);
    constraint.project_direction(x, &mut grad);

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut worst_increase = 0.0f64;
    let grad_inf = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut iterations = 0;
    while iterations < opts.max_iters {
        let gnorm = grad_inf(&grad);
        if gnorm <= opts.grad_tol {
            return MinimizeReport {
                iterations,
                value,
                grad_norm: gnorm,
                converged: true,
                worst_increase,
            };
        }
        iterations += 1;

        // Two-loop recursion for the search direction.
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &dir);
            for i in 0..n {
                dir[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let yy = dot(y, y);
            if yy > 1e-300 {
                let scale = dot(s, y) / yy;
                for d in dir.iter_mut() {
                    *d *= scale;
                }
            }
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for i in 0..n {
                dir[i] += (a - b) * s[i];
            }
        }
        constraint.project_direction(x, &mut dir);

        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            pairs.clear();
            for i in 0..n {
                dir[i] = -grad[i];
            }
            slope = dot(&grad, &dir);
            if slope >= -1e-300 {
                break;
            }
        }

        // Armijo backtracking on the projected step.
        let mut step = 1.0f64;
        let c1 = 1e-4;
        let x_old = x.to_vec();
        let mut new_grad = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x[i] = x_old[i] + step * dir[i];
            }
            constraint.project_point(x);
            let new_value = eval(x, &mut new_grad);
            if new_value <= value + c1 * step * slope {
                if new_value > value {
                    worst_increase = worst_increase.max(new_value - value);
                }
                constraint.project_direction(x, &mut new_grad);
                let s: Vec<f64> = (0..n).map(|i| x[i] - x_old[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| new_grad[i] - grad[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).max(1e-300) {
                    let rho = 1.0 / sy;
                    pairs.push_back((s, y, rho));
                    if pairs.len() > opts.memory {
                        pairs.pop_front();
                    }
                } else {
                    pairs.clear();
                }
                value = new_value;
                grad.copy_from_slice(&new_grad);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            x.copy_from_slice(&x_old);
            break;
        }
    }

    let gnorm = grad_inf(&grad);
    MinimizeReport {
        iterations,
        value,
        grad_norm: gnorm,
        converged: gnorm <= opts.grad_tol,
        worst_increase,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi sweeps of uniform graph-Laplacian smoothing with Dirichlet data.
/// `fixed[i]` marks vertices whose values never change. A cheap initializer
/// for the nonlinear solves.
pub fn laplacian_smooth(
    values: &mut [f64],
    neighbors: &[Vec<usize>],
    fixed: &[bool],
    sweeps: usize,
) {
    let n = values.len();
    let mut next = values.to_vec();
    for _ in 0..sweeps {
        for i in 0..n {
            if fixed[i] || neighbors[i].is_empty() {
                continue;
            }
            let sum: f64 = neighbors[i].iter().map(|&j| values[j]).sum();
            next[i] = sum / neighbors[i].len() as f64;
        }
        values.copy_from_slice(&next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_converges() {
        let mut x = vec![3.0, -2.0, 5.0];
        let report = lbfgs(
            &mut x,
            |x, g| {
                let mut v = 0.0;
                for i in 0..3 {
                    let w = (i + 1) as f64;
                    v += w * x[i] * x[i];
                    g[i] = 2.0 * w * x[i];
                }
                v
            },
            &mut Unconstrained,
            &LbfgsOptions::default(),
        );
        assert!(report.converged);
        assert!(x.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn rosenbrock_converges() {
        let mut x = vec![-1.2, 1.0];
        let report = lbfgs(
            &mut x,
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -400.0 * a * (b - a * a) - 2.0 * (1.0 - a);
                g[1] = 200.0 * (b - a * a);
                100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2)
            },
            &mut Unconstrained,
            &LbfgsOptions {
                max_iters: 5000,
                grad_tol: 1e-9,
                memory: 10,
            },
        );
        assert!(report.converged, "grad norm {}", report.grad_norm);
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }

    struct UnitCircle;

    impl Constraint for UnitCircle {
        fn project_point(&mut self, x: &mut [f64]) {
            let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
            x[0] /= n;
            x[1] /= n;
        }
        fn project_direction(&mut self, x: &[f64], dir: &mut [f64]) {
            let along = dir[0] * x[0] + dir[1] * x[1];
            dir[0] -= along * x[0];
            dir[1] -= along * x[1];
        }
    }

    #[test]
    fn projected_sphere_minimum() {
        // Minimize a linear function on the unit circle in the plane.
        let mut x = vec![0.6, 0.8];
        let report = lbfgs(
            &mut x,
            |x, g| {
                g[0] = 1.0;
                g[1] = 0.5;
                x[0] + 0.5 * x[1]
            },
            &mut UnitCircle,
            &LbfgsOptions {
                max_iters: 500,
                grad_tol: 1e-10,
                memory: 5,
            },
        );
        let expect = [-0.894427191, -0.4472135955];
        assert!(report.converged, "{report:?}");
        assert!((x[0] - expect[0]).abs() < 1e-8, "{x:?} {report:?}");
        assert!((x[1] - expect[1]).abs() < 1e-8);
    }
}
