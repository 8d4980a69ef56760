//! Dense BFGS minimizer with Armijo backtracking.
//!
//! Objective failures (non-finite values, infeasible points) are treated as
//! +∞ so the line search simply backs off.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Convergence when the gradient ∞-norm drops to this value.
    pub grad_tol: f64,
    /// Largest allowed |Δx_j| for a unit step, limits the first moves.
    pub max_step: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            max_step: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iters: usize,
    pub converged: bool,
    /// True when the line search could not make progress.
    pub stalled: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimize `f`, which returns the value and gradient or `None` when the
/// point is infeasible. Returns `None` if the starting point is infeasible.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> Option<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut eval = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let (v, g) = f(x.as_slice())?;
        if v.is_finite() && g.iter().all(|x| x.is_finite()) {
            Some((v, DVector::from_vec(g)))
        } else {
            None
        }
    };

    let mut x = DVector::from_column_slice(x0);
    let (mut fx, mut g) = eval(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh_h = true;
    let mut iters = 0;
    let mut stalled = false;

    while iters < cfg.max_iter {
        if inf_norm(&g) <= cfg.grad_tol {
            break;
        }
        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            fresh_h = true;
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        let big = inf_norm(&dir);
        if big > cfg.max_step {
            dir *= cfg.max_step / big;
            slope *= cfg.max_step / big;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            if let Some((ft, gt)) = eval(&trial) {
                if ft <= fx + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh_h {
                stalled = true;
                break;
            }
            h = DMatrix::identity(n, n);
            fresh_h = true;
            continue;
        };

        iters += 1;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh_h {
                // Shanno-Phua scaling of the initial inverse Hessian.
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H - ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            h.ger(-rho, &s, &hy, 1.0);
            h.ger(-rho, &hy, &s, 1.0);
            h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
            fresh_h = false;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    let grad_inf = inf_norm(&g);
    Some(BfgsOutcome {
        x: x.as_slice().to_vec(),
        value: fx,
        grad_inf,
        iters,
        converged: grad_inf <= cfg.grad_tol,
        stalled,
    })
}
