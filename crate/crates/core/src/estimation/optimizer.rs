//! Quasi-Newton minimization: BFGS inverse-Hessian updates with a
//! strong-Wolfe line search (bracket then zoom with cubic interpolation).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once the max-norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub history: Vec<IterationRecord>,
}

impl BfgsResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::GradientTolerance
    }

    pub fn gradient_norm(&self) -> f64 {
        max_norm(&self.gradient)
    }
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

struct Probe {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

/// Minimizes `f`, which returns the value and gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions, mut on_iter: impl FnMut(&IterationRecord)) -> BfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = f(&x);
    let mut history = Vec::new();
    if !fx.is_finite() || gx.iter().any(|v| !v.is_finite()) {
        return BfgsResult {
            x,
            value: fx,
            gradient: gx,
            iterations: 0,
            termination: Termination::NonFinite,
            history,
        };
    }
    // inverse Hessian, row-major
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < opts.max_iterations {
        if max_norm(&gx) <= opts.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut d = mat_vec(&h, &gx, n);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&d, &gx);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            d = gx.iter().map(|v| -v).collect();
            slope = dot(&d, &gx);
        }
        let alpha0 = if fresh {
            (1.0 / max_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let found = line_search(&mut f, &x, fx, slope, &d, alpha0, opts);
        let probe = match found {
            Some(p) => p,
            None if !fresh => {
                h = identity(n);
                fresh = true;
                continue;
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };
        iterations += 1;
        let s: Vec<f64> = d.iter().map(|v| probe.alpha * v).collect();
        let y: Vec<f64> = probe.g.iter().zip(&gx).map(|(a, b)| a - b).collect();
        x = axpy(&x, 1.0, &s);
        fx = probe.f;
        gx = probe.g;

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy, n);
            fresh = false;
        }
        let rec = IterationRecord {
            iteration: iterations,
            value: fx,
            gradient_norm: max_norm(&gx),
            step: probe.alpha,
        };
        on_iter(&rec);
        history.push(rec);
    }
    if termination == Termination::MaxIterations && max_norm(&gx) <= opts.gradient_tolerance {
        termination = Termination::GradientTolerance;
    }
    BfgsResult {
        x,
        value: fx,
        gradient: gx,
        iterations,
        termination,
        history,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    alpha0: f64,
    opts: &BfgsOptions,
) -> Option<Probe>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |f: &mut F, alpha: f64| -> Probe {
        let (fv, g) = f(&axpy(x, alpha, d));
        let dg = dot(&g, d);
        Probe { alpha, f: fv, g, dg }
    };
    let ok = |p: &Probe| p.f.is_finite() && p.g.iter().all(|v| v.is_finite());

    let mut prev = Probe {
        alpha: 0.0,
        f: f0,
        g: Vec::new(),
        dg: slope0,
    };
    let mut alpha = alpha0;
    for i in 0..opts.max_line_search {
        let cur = eval(f, alpha);
        if !ok(&cur) {
            // overshoot into a non-finite region: shrink toward prev
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            continue;
        }
        if cur.f > f0 + opts.c1 * alpha * slope0 || (i > 0 && cur.f >= prev.f) {
            return zoom(f, &eval, prev, cur, f0, slope0, opts);
        }
        if cur.dg.abs() <= -opts.c2 * slope0 {
            return Some(cur);
        }
        if cur.dg >= 0.0 {
            return zoom(f, &eval, cur, prev, f0, slope0, opts);
        }
        prev = cur;
        alpha *= 2.0;
    }
    None
}

fn zoom<F, E>(f: &mut F, eval: &E, mut lo: Probe, mut hi: Probe, f0: f64, slope0: f64, opts: &BfgsOptions) -> Option<Probe>
where
    E: Fn(&mut F, f64) -> Probe,
{
    for _ in 0..opts.max_line_search {
        let alpha = interpolate(&lo, &hi);
        let cur = eval(f, alpha);
        let finite = cur.f.is_finite() && cur.g.iter().all(|v| v.is_finite());
        if !finite || cur.f > f0 + opts.c1 * alpha * slope0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dg.abs() <= -opts.c2 * slope0 {
                return Some(cur);
            }
            if cur.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1e-16) {
            break;
        }
    }
    // accept any sufficient decrease found
    (lo.alpha > 0.0 && lo.f < f0).then_some(lo)
}

/// Cubic minimizer between the two probes, safeguarded to the inner 80%.
fn interpolate(a: &Probe, b: &Probe) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a.alpha, b.alpha) } else { (b.alpha, a.alpha) };
    let mid = 0.5 * (lo + hi);
    if !a.f.is_finite() || !b.f.is_finite() || !a.dg.is_finite() || !b.dg.is_finite() {
        return mid;
    }
    let d1 = a.dg + b.dg - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.dg * b.dg;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.dg + d2 - d1) / (b.dg - a.dg + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn solves_rosenbrock() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &BfgsOptions { gradient_tolerance: 1e-8, ..Default::default() }, |_| {});
        assert!(r.converged(), "{:?}", r.termination);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn solves_ill_scaled_quadratic() {
        let scales = [1e-3, 1.0, 1e3, 10.0];
        let f = |x: &[f64]| {
            let v: f64 = x.iter().zip(&scales).map(|(xi, s)| 0.5 * s * (xi - 1.0).powi(2)).sum();
            let g = x.iter().zip(&scales).map(|(xi, s)| s * (xi - 1.0)).collect();
            (v, g)
        };
        let r = minimize(f, &[0.0; 4], &BfgsOptions { gradient_tolerance: 1e-9, ..Default::default() }, |_| {});
        assert!(r.converged());
        for (xi, s) in r.x.iter().zip(&scales) {
            assert!((xi - 1.0).abs() < 1e-9 / s * 10.0);
        }
    }

    #[test]
    fn reports_max_iterations() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &BfgsOptions { max_iterations: 3, ..Default::default() }, |_| {});
        assert_eq!(r.termination, Termination::MaxIterations);
        assert_eq!(r.iterations, 3);
        assert_eq!(r.history.len(), 3);
    }

    #[test]
    fn stops_immediately_at_optimum() {
        let r = minimize(|x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]), &[0.0], &BfgsOptions::default(), |_| {});
        assert!(r.converged());
        assert_eq!(r.iterations, 0);
    }
}
