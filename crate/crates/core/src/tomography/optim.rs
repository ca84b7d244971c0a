//! Deterministic quasi-Newton minimizer used by the likelihood fits.
//!
//! BFGS on the inverse Hessian, central-difference gradients, Armijo
//! backtracking from a unit step. No randomness, so repeated fits are
//! bit-identical.

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after the initial point and after every accepted step.
    pub history: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

fn gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 6e-6 * x[i].abs().max(1e-2);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        out[i] = (up - down) / (2.0 * h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as
/// rejected trial points.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], settings: Settings) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = vec![0.0; n];
    gradient(&f, &x, &mut g);
    let mut h = identity(n);
    let mut fresh_hessian = true;
    let mut history = vec![fx];
    let mut direction = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    let mut iterations = 0;
    while iterations < settings.max_iterations {
        iterations += 1;
        for i in 0..n {
            direction[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            h = identity(n);
            fresh_hessian = true;
            direction.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = -dot(&g, &g);
            if slope == 0.0 {
                return Minimum { x, value: fx, iterations, history, converged: true };
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for i in 0..n {
                trial[i] = x[i] + step * direction[i];
            }
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            if fresh_hessian {
                // No descent possible at working precision.
                return Minimum { x, value: fx, iterations, history, converged: true };
            }
            h = identity(n);
            fresh_hessian = true;
            continue;
        };

        gradient(&f, &trial, &mut g_new);
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh_hessian {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh_hessian = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        let improvement = fx - f_new;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_new);
        fx = f_new;
        history.push(fx);
        if improvement < settings.tolerance {
            return Minimum { x, value: fx, iterations, history, converged: true };
        }
    }
    Minimum { x, value: fx, iterations, history, converged: false }
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / (yᵀ s)`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
