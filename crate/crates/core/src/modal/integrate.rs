//! Exact per-mode integration of the decoupled modal equations
//! `q'' + (xi + zeta * lambda) q' + lambda q = g` with `g` held constant over
//! the step.

/// Below this `|omega^2| dt^2` the trigonometric/hyperbolic kernels are
/// replaced by their Taylor series to avoid cancellation near critical damping.
const SERIES_THRESHOLD: f64 = 1e-6;

/// Advances one damped oscillator by `dt`, returning `(q, q_dot)`.
///
/// `lambda` must be positive. The step is exact for constant `force`.
pub fn advance_oscillator(lambda: f64, damping: f64, q: f64, v: f64, force: f64, dt: f64) -> (f64, f64) {
    let q_eq = force / lambda;
    let y0 = q - q_eq;
    let a = 0.5 * damping;
    let omega2 = lambda - a * a;
    let (ec, es) = damped_kernels(a, omega2, dt);
    // y(t)  = e^{-at} [y0 C + (v0 + a y0) S]
    // y'(t) = e^{-at} [v0 C - (a v0 + lambda y0) S]
    let y = y0 * ec + (v + a * y0) * es;
    let dy = v * ec - (a * v + lambda * y0) * es;
    (q_eq + y, dy)
}

/// `(e^{-at} C(t), e^{-at} S(t))` where `C'' = -omega^2 C`, `C(0) = 1`,
/// `C'(0) = 0` and `S = integral of C`.
fn damped_kernels(a: f64, omega2: f64, t: f64) -> (f64, f64) {
    let x = omega2 * t * t;
    if x.abs() < SERIES_THRESHOLD {
        let e = (-a * t).exp();
        let c = 1.0 - x / 2.0 + x * x / 24.0;
        let s = t * (1.0 - x / 6.0 + x * x / 120.0);
        (e * c, e * s)
    } else if omega2 > 0.0 {
        let w = omega2.sqrt();
        let e = (-a * t).exp();
        (e * (w * t).cos(), e * (w * t).sin() / w)
    } else {
        // overdamped: roots r1 = -a + mu (slow), r2 = -a - mu (fast)
        let mu = (-omega2).sqrt();
        let lambda = a * a + omega2;
        let r1 = -lambda / (a + mu);
        let r2 = -a - mu;
        let (e1, e2) = ((r1 * t).exp(), (r2 * t).exp());
        (0.5 * (e1 + e2), (e1 - e2) / (2.0 * mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Classical RK4 on the same scalar ODE with many substeps.
    fn rk4(lambda: f64, c: f64, q: f64, v: f64, g: f64, t: f64, steps: usize) -> (f64, f64) {
        let f = |q: f64, v: f64| (v, g - c * v - lambda * q);
        let h = t / steps as f64;
        let (mut q, mut v) = (q, v);
        for _ in 0..steps {
            let k1 = f(q, v);
            let k2 = f(q + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = f(q + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = f(q + h * k3.0, v + h * k3.1);
            q += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (q, v)
    }

    #[test]
    fn undamped_cosine() {
        let n = 1000;
        let dt = PI / n as f64;
        let (mut q, mut v) = (1.0, 0.0);
        for _ in 0..n {
            (q, v) = advance_oscillator(4.0, 0.0, q, v, 0.0, dt);
        }
        assert!((q - 1.0).abs() < 1e-6, "q(pi) = {q}");
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn all_regimes_match_rk4() {
        // underdamped, near-critical (both sides), critical, overdamped, stiff overdamped
        let lambda = 25.0;
        for c in [0.3, 10.0 - 1e-9, 10.0, 10.0 + 1e-9, 14.0, 400.0] {
            for (q0, v0, g) in [(1.0, 0.0, 0.0), (0.2, -1.5, 3.0)] {
                let dt = 0.05;
                let exact = advance_oscillator(lambda, c, q0, v0, g, dt);
                let reference = rk4(lambda, c, q0, v0, g, dt, 200_000);
                assert!(
                    (exact.0 - reference.0).abs() < 1e-10,
                    "c = {c}: {exact:?} vs {reference:?}"
                );
                assert!(
                    (exact.1 - reference.1).abs() < 1e-9,
                    "c = {c}: {exact:?} vs {reference:?}"
                );
            }
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        assert_eq!(advance_oscillator(9.0, 0.5, 0.0, 0.0, 0.0, 0.1), (0.0, 0.0));
    }

    #[test]
    fn damped_energy_never_increases() {
        for c in [0.01, 1.0, 6.0, 50.0] {
            let lambda = 9.0;
            let (mut q, mut v) = (1.0, 2.0);
            let mut energy = 0.5 * v * v + 0.5 * lambda * q * q;
            for _ in 0..2000 {
                (q, v) = advance_oscillator(lambda, c, q, v, 0.0, 0.01);
                let e = 0.5 * v * v + 0.5 * lambda * q * q;
                assert!(e <= energy * (1.0 + 1e-14) + 1e-300, "energy rose at c = {c}");
                energy = e;
            }
        }
    }

    #[test]
    fn constant_force_settles_at_static_solution() {
        let (mut q, mut v) = (0.0, 0.0);
        for _ in 0..10_000 {
            (q, v) = advance_oscillator(4.0, 2.0, q, v, 8.0, 0.01);
        }
        assert!((q - 2.0).abs() < 1e-12 && v.abs() < 1e-12);
    }
}
