//! Derivative-free local minimization of a black-box objective.
//!
//! Quasi-Newton (BFGS) iteration on a gradient estimated by central
//! differences of objective values only. The first step has length
//! `initial_step` along the steepest-descent estimate; later steps use the
//! inverse-Hessian model with a backtracking line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeConfig {
    /// Converged once both the largest parameter change and the objective
    /// change of an accepted step fall below this.
    pub tol: f64,
    pub initial_step: f64,
    /// Central-difference step.
    pub fd_step: f64,
    pub max_iter: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self { tol: 1e-5, initial_step: 1e-2, fd_step: 1e-5, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        (self.f)(x)
    }

    fn gradient(&mut self, x: &DVector<f64>, h: f64) -> DVector<f64> {
        let mut xp = x.as_slice().to_vec();
        DVector::from_fn(x.len(), |k, _| {
            let orig = xp[k];
            xp[k] = orig + h;
            let fp = self.eval(&xp);
            xp[k] = orig - h;
            let fm = self.eval(&xp);
            xp[k] = orig;
            (fp - fm) / (2.0 * h)
        })
    }
}

/// Minimizes `f` from `x0`. Hitting `max_iter` returns the best point with
/// `converged == false`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], cfg: &MinimizeConfig) -> MinimizeResult {
    let mut obj = Counted { f, evals: 0 };
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = obj.eval(x.as_slice());
    if n == 0 {
        return MinimizeResult { x: vec![], f: fx, iterations: 0, evaluations: obj.evals, converged: true };
    }
    let mut g = obj.gradient(&x, cfg.fd_step);
    let mut hinv: Option<DMatrix<f64>> = None;
    let mut failures = 0;
    for iter in 1..=cfg.max_iter {
        if g.amax() < 1e-10 {
            return MinimizeResult {
                x: x.as_slice().to_vec(),
                f: fx,
                iterations: iter - 1,
                evaluations: obj.evals,
                converged: true,
            };
        }
        let mut dir = match &hinv {
            Some(h) => -(h * &g),
            None => -&g * (cfg.initial_step / g.norm()),
        };
        if dir.dot(&g) >= 0.0 {
            // Model lost positive definiteness; fall back to steepest descent.
            hinv = None;
            dir = -&g * (cfg.initial_step / g.norm());
        }
        let slope = dir.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + &dir * alpha;
            let ft = obj.eval(trial.as_slice());
            if ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            failures += 1;
            if failures >= 2 || hinv.is_none() {
                let converged = g.amax() < cfg.tol;
                return MinimizeResult {
                    x: x.as_slice().to_vec(),
                    f: fx,
                    iterations: iter,
                    evaluations: obj.evals,
                    converged,
                };
            }
            hinv = None;
            continue;
        };
        failures = 0;
        let s = &x_new - &x;
        let df = fx - f_new;
        let g_new = obj.gradient(&x_new, cfg.fd_step);
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 {
            let h = hinv.take().unwrap_or_else(|| DMatrix::identity(n, n) * (sy / y.dot(&y)));
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy^T + hy s^T) + (rho^2 yHy + rho) s s^T
            let mut h_new = h;
            h_new -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h_new += &s * s.transpose() * (rho * rho * yhy + rho);
            hinv = Some(h_new);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if s.amax() < cfg.tol && df.abs() < cfg.tol {
            return MinimizeResult {
                x: x.as_slice().to_vec(),
                f: fx,
                iterations: iter,
                evaluations: obj.evals,
                converged: true,
            };
        }
    }
    MinimizeResult {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations: cfg.max_iter,
        evaluations: obj.evals,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 0.5).powi(2) + 3.0;
        let r = minimize(f, &[0.0, 0.0], &MinimizeConfig::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 0.5).abs() < 1e-5);
        assert!((r.f - 3.0).abs() < 1e-9);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &MinimizeConfig { max_iter: 2000, ..Default::default() });
        assert!(r.converged, "{r:?}");
        assert!(r.f < 1e-8);
    }

    #[test]
    fn periodic_objective() {
        // cos-shaped landscape as in a rotation angle
        let f = |x: &[f64]| -(x[0] - 0.3).cos() - 0.5 * (2.0 * x[1]).cos();
        let r = minimize(f, &[0.0, 0.2], &MinimizeConfig::default());
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-4 && r.x[1].abs() < 1e-4);
    }

    #[test]
    fn iteration_cap_is_not_an_error() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &MinimizeConfig { max_iter: 2, ..Default::default() });
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
        assert!(r.f < 24.2);
    }

    #[test]
    fn no_parameters() {
        let r = minimize(|_| 4.0, &[], &MinimizeConfig::default());
        assert!(r.converged);
        assert_eq!((r.f, r.iterations), (4.0, 0));
    }
}
