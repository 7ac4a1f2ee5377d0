//! Quadrature check that the density normalizer is right: for every (alpha,
//! beta) on a grid, the density must integrate to 1 over the real line. The
//! integrator below is written from scratch against the density evaluations
//! only, so it shares no code path with the constants it validates.

use uwlla::GcParams;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, whole: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let left = simpson(f, a, c);
    let right = simpson(f, c, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, c, 0.5 * eps, left, depth - 1)
            + adaptive(f, c, b, 0.5 * eps, right, depth - 1)
    }
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    adaptive(f, a, b, eps, simpson(f, a, b), 48)
}

#[test]
fn density_integrates_to_one_across_shape_bandwidth_grid() {
    for &alpha in &[0.5_f64, 1.0, 1.7, 2.0, 4.0] {
        for &beta in &[0.07_f64, 0.7, 2.0] {
            let p = GcParams::new(alpha, beta).unwrap();
            let f = move |e: f64| p.ggd_density(e);
            // Truncation point where the tail mass is far below the
            // quadrature tolerance: exp(-(L/beta)^alpha) < 1e-18.
            let half_width = beta * 42.0_f64.powf(1.0 / alpha);
            // Split at the peak: the density has a cusp at 0 for alpha < 2.
            let mass = integrate(&f, -half_width, 0.0, 5e-10)
                + integrate(&f, 0.0, half_width, 5e-10);
            assert!(
                (mass - 1.0).abs() <= 1e-6,
                "mass {mass} for alpha {alpha}, beta {beta}"
            );
        }
    }
}

#[test]
fn loss_saturates_toward_per_coordinate_budget() {
    // Each coordinate contributes at most gamma (raw form); enormous
    // residuals approach that budget.
    let p = GcParams::new(1.7, 0.7).unwrap();
    let raw = p.gc_loss_raw(&[1e6, -1e6, 1e6]);
    let budget = 3.0 * p.gamma();
    assert!(raw <= budget);
    assert!(raw >= budget * (1.0 - 1e-12), "raw {raw} vs budget {budget}");
}
