//! Limited-memory BFGS with simple bounds.
//!
//! Each iteration builds the quadratic model from the last `memory`
//! curvature pairs, finds the generalized Cauchy point along the projected
//! steepest-descent path, minimizes the model over the variables that are
//! still free there, and backtracks along the resulting feasible direction.
//! The curvature matrix is held densely: the problems solved here have at
//! most a few dozen variables, which keeps the linear algebra trivial.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbOptions {
    pub memory: usize,
    /// Stop when the projected gradient's max-norm drops below this.
    pub pgtol: f64,
    /// Stop when the relative decrease of `f` over an iteration is below this.
    pub ftol: f64,
    pub max_iterations: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        LbfgsbOptions {
            memory: 10,
            pgtol: 1e-6,
            ftol: 1e7 * f64::EPSILON,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ProjectedGradient,
    RelativeReduction,
    MaxIterations,
    /// The line search could not decrease `f` along the model direction.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsbResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

/// Minimizes `fg` (returning value and gradient) over `lower <= x <= upper`.
pub fn minimize<F>(mut fg: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsbOptions) -> Result<LbfgsbResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Dimension("bounds and start point differ in length".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::invalid("lower bound exceeds upper bound"));
    }
    if opts.memory == 0 {
        return Err(Error::invalid("memory must be at least 1"));
    }
    let project = |x: &mut DVector<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut x = DVector::from_column_slice(x0);
    project(&mut x);
    let mut evaluations = 0;
    let mut eval = |x: &DVector<f64>, evaluations: &mut usize| -> Result<(f64, DVector<f64>)> {
        *evaluations += 1;
        let (f, g) = fg(x.as_slice())?;
        if g.len() != n {
            return Err(Error::Dimension("gradient length differs from x".into()));
        }
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "objective {f} or its gradient at {:?}",
                x.as_slice()
            )));
        }
        Ok((f, DVector::from_vec(g)))
    };
    let (mut f, mut g) = eval(&x, &mut evaluations)?;

    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    let mut iterations = 0;
    let stop = loop {
        if projected_gradient_norm(&x, &g, lower, upper) < opts.pgtol {
            break StopReason::ProjectedGradient;
        }
        if iterations >= opts.max_iterations {
            break StopReason::MaxIterations;
        }

        let b = model_matrix(n, &pairs);
        let xc = cauchy_point(&x, &g, &b, lower, upper);
        let xbar = subspace_minimum(&x, &g, &b, &xc, lower, upper);
        let d = &xbar - &x;
        let slope = g.dot(&d);
        if !(slope < 0.0) {
            if pairs.is_empty() {
                break StopReason::LineSearch;
            }
            // The model went stale; restart from steepest descent.
            pairs.clear();
            continue;
        }

        // Without curvature information the model is the identity, so scale
        // the first trial to a unit move in x.
        let steepest = pairs.is_empty();
        let mut step = if steepest { 1.0 / d.norm() } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = &x + step * &d;
            project(&mut trial);
            let (ft, gt) = eval(&trial, &mut evaluations)?;
            if ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        // In concave regions no curvature pair is kept and steepest descent
        // would crawl at unit moves; keep doubling while it pays off.
        if steepest {
            while let Some((_, fa, _)) = &accepted {
                let fa = *fa;
                let mut trial = &x + 2.0 * step * &d;
                project(&mut trial);
                if accepted.as_ref().is_some_and(|(xa, _, _)| *xa == trial) || step > 1e12 {
                    break;
                }
                let (ft, gt) = eval(&trial, &mut evaluations)?;
                if !(ft < fa && ft <= f + 1e-4 * 2.0 * step * slope) {
                    break;
                }
                step *= 2.0;
                accepted = Some((trial, ft, gt));
            }
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if pairs.is_empty() {
                break StopReason::LineSearch;
            }
            pairs.clear();
            continue;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > f64::EPSILON * y.norm_squared() {
            if pairs.len() == opts.memory {
                pairs.remove(0);
            }
            pairs.push((s, y));
        }
        let f_old = f;
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        if (f_old - f) / f_old.abs().max(f.abs()).max(1.0) <= opts.ftol {
            break StopReason::RelativeReduction;
        }
    };

    Ok(LbfgsbResult {
        x: x.as_slice().to_vec(),
        f,
        iterations,
        evaluations,
        stop,
    })
}

fn projected_gradient_norm(x: &DVector<f64>, g: &DVector<f64>, lower: &[f64], upper: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lower[i], upper[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

/// BFGS matrix obtained by applying the stored pairs to `theta * I`, with
/// `theta = y'y / s'y` of the newest pair.
fn model_matrix(n: usize, pairs: &[(DVector<f64>, DVector<f64>)]) -> DMatrix<f64> {
    let theta = pairs.last().map(|(s, y)| y.norm_squared() / s.dot(y)).unwrap_or(1.0);
    let mut b = DMatrix::identity(n, n) * theta;
    for (s, y) in pairs {
        let bs = &b * s;
        let sbs = s.dot(&bs);
        let sy = s.dot(y);
        if sbs <= 0.0 || sy <= 0.0 {
            continue;
        }
        b -= &bs * bs.transpose() / sbs;
        b += y * y.transpose() / sy;
    }
    b
}

/// First local minimizer of the quadratic model along the projected path
/// `P(x - t g)`.
fn cauchy_point(x: &DVector<f64>, g: &DVector<f64>, b: &DMatrix<f64>, lower: &[f64], upper: &[f64]) -> DVector<f64> {
    let n = x.len();
    let breakpoint = |i: usize| -> f64 {
        if g[i] < 0.0 {
            (x[i] - upper[i]) / g[i]
        } else if g[i] > 0.0 {
            (x[i] - lower[i]) / g[i]
        } else {
            f64::INFINITY
        }
    };
    let t_break: Vec<f64> = (0..n).map(breakpoint).collect();
    let mut order: Vec<usize> = (0..n).filter(|&i| t_break[i] > 0.0).collect();
    order.sort_by(|&a, &b| t_break[a].total_cmp(&t_break[b]));

    let mut d = DVector::from_fn(n, |i, _| if t_break[i] > 0.0 { -g[i] } else { 0.0 });
    let mut xc = x.clone();
    let mut t_prev = 0.0;
    let mut k = 0;
    loop {
        if d.iter().all(|&v| v == 0.0) {
            return xc;
        }
        let z = &xc - x;
        let bd = b * &d;
        let f1 = g.dot(&d) + z.dot(&bd);
        let f2 = d.dot(&bd);
        if f1 >= 0.0 {
            return xc;
        }
        let t_next = order.get(k).map_or(f64::INFINITY, |&i| t_break[i]);
        let dt_min = if f2 > 0.0 { -f1 / f2 } else { f64::INFINITY };
        if dt_min < t_next - t_prev {
            xc += dt_min * &d;
            return clamp_to(xc, lower, upper);
        }
        if t_next.is_infinite() {
            // Unbounded descent along a free direction; cannot happen with
            // finite bounds.
            return clamp_to(xc, lower, upper);
        }
        xc += (t_next - t_prev) * &d;
        t_prev = t_next;
        while k < order.len() && t_break[order[k]] <= t_next {
            let i = order[k];
            xc[i] = if d[i] > 0.0 { upper[i] } else { lower[i] };
            d[i] = 0.0;
            k += 1;
        }
    }
}

fn clamp_to(mut x: DVector<f64>, lower: &[f64], upper: &[f64]) -> DVector<f64> {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
    x
}

/// Minimizes the model over the variables free at the Cauchy point, then
/// pulls the result back into the box along the segment from `xc`.
fn subspace_minimum(
    x: &DVector<f64>,
    g: &DVector<f64>,
    b: &DMatrix<f64>,
    xc: &DVector<f64>,
    lower: &[f64],
    upper: &[f64],
) -> DVector<f64> {
    let free: Vec<usize> = (0..x.len()).filter(|&i| xc[i] > lower[i] && xc[i] < upper[i]).collect();
    if free.is_empty() {
        return xc.clone();
    }
    let grad_c = g + b * (xc - x);
    let nf = free.len();
    let bff = DMatrix::from_fn(nf, nf, |r, c| b[(free[r], free[c])]);
    let rhs = DVector::from_fn(nf, |r, _| -grad_c[free[r]]);
    let Some(chol) = bff.cholesky() else {
        return xc.clone();
    };
    let du = chol.solve(&rhs);

    let mut alpha: f64 = 1.0;
    for (r, &i) in free.iter().enumerate() {
        if du[r] > 0.0 {
            alpha = alpha.min((upper[i] - xc[i]) / du[r]);
        } else if du[r] < 0.0 {
            alpha = alpha.min((lower[i] - xc[i]) / du[r]);
        }
    }
    let mut out = xc.clone();
    for (r, &i) in free.iter().enumerate() {
        out[i] += alpha * du[r];
    }
    clamp_to(out, lower, upper)
}
