//! Logistic regression (accelerated proximal gradient) and linear SVM
//! (averaged sub-gradient) on a dense row-major matrix.

use super::{ClassifierKind, ClassifyError};

/// Training data after continuous-column scaling.
pub(crate) struct Problem<'a> {
    pub x: &'a [f64],
    pub y: &'a [i8],
    pub p: usize,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn margin(&self, i: usize, w: &[f64], b: f64) -> f64 {
        let z = self.row(i).iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        f64::from(self.y[i]) * z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Solution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of the returned iterate after every iteration (never increases).
    pub history: Vec<f64>,
}

/// `log(1 + exp(-m))` without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1 / (1 + exp(m))`.
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

pub(crate) fn penalty(kind: ClassifierKind, w: &[f64]) -> f64 {
    match kind {
        ClassifierKind::LogregL1 => w.iter().map(|v| v.abs()).sum(),
        ClassifierKind::LogregL2 | ClassifierKind::LinearSvm => w.iter().map(|v| v * v).sum(),
    }
}

fn logistic_loss(prob: &Problem<'_>, w: &[f64], b: f64) -> f64 {
    (0..prob.n()).map(|i| log1p_exp_neg(prob.margin(i, w, b))).sum::<f64>() / prob.n() as f64
}

fn logistic_loss_grad(prob: &Problem<'_>, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let n = prob.n() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; prob.p];
    let mut gb = 0.0;
    for i in 0..prob.n() {
        let m = prob.margin(i, w, b);
        loss += log1p_exp_neg(m);
        let coef = -f64::from(prob.y[i]) * sigmoid_neg(m);
        gw.iter_mut().zip(prob.row(i)).for_each(|(g, x)| *g += coef * x);
        gb += coef;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb / n)
}

pub(crate) fn logistic_objective(kind: ClassifierKind, prob: &Problem<'_>, alpha: f64, w: &[f64], b: f64) -> f64 {
    logistic_loss(prob, w, b) + alpha * penalty(kind, w)
}

fn prox(kind: ClassifierKind, v: &[f64], step_alpha: f64) -> Vec<f64> {
    match kind {
        ClassifierKind::LogregL1 => v.iter().map(|&x| x.signum() * (x.abs() - step_alpha).max(0.0)).collect(),
        _ => v.iter().map(|&x| x / (1.0 + 2.0 * step_alpha)).collect(),
    }
}

/// A flat objective alone stops too early; the prox-gradient step must be
/// small as well.
const GRADIENT_MAPPING_TOL: f64 = 1e-7;

/// Monotone FISTA with backtracking on the Lipschitz estimate. A momentum
/// step that would raise the objective is rejected and momentum restarts.
pub(crate) fn fit_logistic(
    kind: ClassifierKind,
    prob: &Problem<'_>,
    alpha: f64,
    tolerance: f64,
    max_iter: usize,
) -> Result<Solution, ClassifyError> {
    let p = prob.p;
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut obj = logistic_objective(kind, prob, alpha, &w, b);
    let (mut yw, mut yb) = (w.clone(), b);
    let mut t: f64 = 1.0;
    let mut lip: f64 = 1.0;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let (fy, gw, gb) = logistic_loss_grad(prob, &yw, yb);
        let (zw, zb, fz, mapping) = loop {
            let step: Vec<f64> = yw.iter().zip(&gw).map(|(v, g)| v - g / lip).collect();
            let zw = prox(kind, &step, alpha / lip);
            let zb = yb - gb / lip;
            let fz = logistic_loss(prob, &zw, zb);
            let lin: f64 = zw.iter().zip(&yw).zip(&gw).map(|((z, y), g)| g * (z - y)).sum::<f64>() + gb * (zb - yb);
            let dist2: f64 = zw.iter().zip(&yw).map(|(z, y)| (z - y) * (z - y)).sum::<f64>() + (zb - yb).powi(2);
            if fz <= fy + lin + 0.5 * lip * dist2 + 1e-15 * fy.abs() || lip > 1e30 {
                let mapping = zw.iter().zip(&yw).map(|(z, y)| (z - y).abs()).fold((zb - yb).abs(), f64::max) * lip;
                break (zw, zb, fz, mapping);
            }
            lip *= 2.0;
        };
        let obj_z = fz + alpha * penalty(kind, &zw);
        if !obj_z.is_finite() {
            return Err(ClassifyError::NonFinite);
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if obj_z <= obj {
            let decrease = obj - obj_z;
            let mom = (t - 1.0) / t_next;
            yw = zw.iter().zip(&w).map(|(z, old)| z + mom * (z - old)).collect();
            yb = zb + mom * (zb - b);
            w = zw;
            b = zb;
            obj = obj_z;
            t = t_next;
            history.push(obj);
            if decrease <= tolerance * obj.abs().max(1e-12) && mapping <= GRADIENT_MAPPING_TOL {
                converged = true;
                break;
            }
        } else {
            yw = w.clone();
            yb = b;
            t = 1.0;
            history.push(obj);
        }
    }
    Ok(Solution { weights: w, bias: b, objective: obj, iterations, converged, history })
}

fn hinge_objective(prob: &Problem<'_>, alpha: f64, w: &[f64], b: f64) -> f64 {
    let loss = (0..prob.n()).map(|i| (1.0 - prob.margin(i, w, b)).max(0.0)).sum::<f64>() / prob.n() as f64;
    loss + alpha * penalty(ClassifierKind::LinearSvm, w)
}

pub(crate) fn svm_objective(prob: &Problem<'_>, alpha: f64, w: &[f64], b: f64) -> f64 {
    hinge_objective(prob, alpha, w, b)
}

const SVM_WINDOW: usize = 500;

/// Full-batch sub-gradient descent on the hinge term with an exact ridge
/// prox, steps `η0/√t`, and running averages of the iterates. The best
/// averaged iterate seen so far is returned.
pub(crate) fn fit_svm(
    prob: &Problem<'_>,
    alpha: f64,
    tolerance: f64,
    max_iter: usize,
) -> Result<Solution, ClassifyError> {
    let (n, p) = (prob.n(), prob.p);
    let max_norm2 = (0..n).map(|i| prob.row(i).iter().map(|v| v * v).sum::<f64>() + 1.0).fold(1.0, f64::max);
    let eta0 = 1.0 / max_norm2.sqrt();

    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut avg_w = vec![0.0; p];
    let mut avg_b = 0.0;
    let mut best = (hinge_objective(prob, alpha, &w, b), w.clone(), b);
    let mut history = Vec::new();
    let mut window_start = best.0;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=max_iter {
        iterations = t;
        let eta = eta0 / (t as f64).sqrt();
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for i in 0..n {
            if prob.margin(i, &w, b) < 1.0 {
                let yi = f64::from(prob.y[i]);
                gw.iter_mut().zip(prob.row(i)).for_each(|(g, x)| *g -= yi * x);
                gb -= yi;
            }
        }
        let shrink = 1.0 + 2.0 * eta * alpha;
        w.iter_mut().zip(&gw).for_each(|(v, g)| *v = (*v - eta * g / n as f64) / shrink);
        b -= eta * gb / n as f64;

        let tf = t as f64;
        avg_w.iter_mut().zip(&w).for_each(|(a, v)| *a += (v - *a) / tf);
        avg_b += (b - avg_b) / tf;
        let obj = hinge_objective(prob, alpha, &avg_w, avg_b);
        if !obj.is_finite() {
            return Err(ClassifyError::NonFinite);
        }
        if obj < best.0 {
            best = (obj, avg_w.clone(), avg_b);
        }
        history.push(best.0);
        if t % SVM_WINDOW == 0 {
            if window_start - best.0 <= tolerance * best.0.abs().max(1e-12) {
                converged = true;
                break;
            }
            window_start = best.0;
        }
    }
    let (objective, weights, bias) = best;
    Ok(Solution { weights, bias, objective, iterations, converged, history })
}
