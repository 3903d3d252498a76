//! Continuous-time references for the discretized load models.

#![allow(dead_code)]

/// First-order load under a piecewise-constant switch signal, solved in
/// closed form from one switching instant to the next:
/// `p(t) = u + (p(t_s) - u) * exp(pole * (t - t_s))`.
pub fn first_order_closed_form(
    size: f64,
    off_level: f64,
    on_pole: f64,
    off_pole: f64,
    dt: f64,
    w: &[bool],
    p0: f64,
) -> Vec<f64> {
    let mut out = vec![p0];
    let mut p_switch = p0;
    let mut k_switch = 0usize;
    for k in 0..w.len() {
        if k > 0 && w[k] != w[k - 1] {
            p_switch = *out.last().unwrap();
            k_switch = k;
        }
        let (u, pole) = if w[k] {
            (size, on_pole)
        } else {
            (off_level, off_pole)
        };
        let elapsed = (k + 1 - k_switch) as f64 * dt;
        out.push(u + (p_switch - u) * (pole * elapsed).exp());
    }
    out
}

/// `y'' + a1 y' + a0 y = a0 u` from rest, classical RK4 with step `h`,
/// recorded every `every` steps.
pub fn second_order_rk4(a0: f64, a1: f64, u: f64, h: f64, steps: usize, every: usize) -> Vec<f64> {
    let f = |y: f64, v: f64| (v, a0 * (u - y) - a1 * v);
    let (mut y, mut v) = (0.0f64, 0.0f64);
    let mut out = vec![y];
    for s in 1..=steps {
        let (k1y, k1v) = f(y, v);
        let (k2y, k2v) = f(y + 0.5 * h * k1y, v + 0.5 * h * k1v);
        let (k3y, k3v) = f(y + 0.5 * h * k2y, v + 0.5 * h * k2v);
        let (k4y, k4v) = f(y + h * k3y, v + h * k3v);
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if s % every == 0 {
            out.push(y);
        }
    }
    out
}
