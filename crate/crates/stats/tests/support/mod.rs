//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

/// Metrics by direct counting over (pred, truth) pairs, one class at a time.
pub struct BruteMetrics {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

pub fn brute_metrics(preds: &[usize], truths: &[usize], k: usize) -> BruteMetrics {
    let n = preds.len();
    let mut correct = 0;
    for i in 0..n {
        if preds[i] == truths[i] {
            correct += 1;
        }
    }
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for i in 0..n {
            match (preds[i] == c, truths[i] == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        ps += p;
        rs += r;
        fs += f;
    }
    BruteMetrics {
        accuracy: correct as f64 / n as f64,
        precision_macro: ps / k as f64,
        recall_macro: rs / k as f64,
        f1_macro: fs / k as f64,
    }
}

fn t_density(x: f64, dof: f64) -> f64 {
    // Unnormalized; callers divide by the integral over the whole line.
    (1.0 + x * x / dof).powf(-(dof + 1.0) / 2.0)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Two-tailed Student-t p-value by adaptive Simpson quadrature, with the
/// substitution x = tan(u) mapping the real line onto (-pi/2, pi/2).
pub fn t_two_tailed_by_quadrature(t: f64, dof: f64) -> f64 {
    let g = |u: f64| {
        let x = u.tan();
        let c = u.cos();
        t_density(x, dof) / (c * c)
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let total = integrate(&g, 0.0, half_pi - 1e-12, 1e-13);
    let inner = integrate(&g, 0.0, t.abs().atan(), 1e-13);
    ((total - inner) / total).clamp(0.0, 1.0)
}
