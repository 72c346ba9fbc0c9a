//! The manufactured poroelastic benchmark on the unit square.
//!
//! Displacement, pressure, and Darcy flux are prescribed in closed form, the
//! body force and fluid source are derived so the three-field system holds
//! exactly, and the construction keeps the fluid load identically zero and
//! the pressure mean-free for every time and every choice of permeability
//! and storage coefficient. Boundary conditions are homogeneous: clamped
//! displacement, no normal flux.
//!
//! `verify_manufactured` re-derives every hand-written derivative with
//! finite differences and reports the worst residual of each governing
//! equation at sampled points; the test suite pins these near machine
//! accuracy so a typo in any coefficient cannot survive.

use std::f64::consts::PI;

/// Physical and stepping parameters of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub kappa: f64,
    pub c0: f64,
    pub mu: f64,
    pub lambda: f64,
    /// Backward-Euler step length.
    pub tau: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            kappa: 1.0,
            c0: 0.0,
            mu: 1.0,
            lambda: 1.0,
            tau: 1.0,
        }
    }
}

/// Closed-form fields and loads of the benchmark.
#[derive(Debug, Clone, Copy)]
pub struct ExactFields {
    pub params: Params,
}

pub fn exact_fields(params: Params) -> ExactFields {
    ExactFields { params }
}

/// Quartic bump factor and its derivatives: G(x) = (x (x - 1))^2.
fn bump(x: f64) -> (f64, f64, f64) {
    let g = x * x - x;
    let dg = 2.0 * x - 1.0;
    (g * g, 2.0 * g * dg, 2.0 * (dg * dg + 2.0 * g))
}

impl ExactFields {
    pub fn displacement(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        [
            t * (PI * x[0]).sin() * (PI * x[1]).sin(),
            2.0 * t * (3.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin(),
        ]
    }

    /// du/dt; the displacement is linear in time.
    pub fn displacement_rate(&self, x: [f64; 2]) -> [f64; 2] {
        self.displacement(1.0, x)
    }

    /// grad[i][j] = d u_i / d x_j.
    pub fn displacement_grad(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (s1, c1) = (PI * x[0]).sin_cos();
        let (s2, c2) = (PI * x[1]).sin_cos();
        let (s3, c3) = (3.0 * PI * x[0]).sin_cos();
        let (s4, c4) = (4.0 * PI * x[1]).sin_cos();
        [
            [t * PI * c1 * s2, t * PI * s1 * c2],
            [6.0 * t * PI * c3 * s4, 8.0 * t * PI * s3 * c4],
        ]
    }

    pub fn div_displacement(&self, t: f64, x: [f64; 2]) -> f64 {
        let g = self.displacement_grad(t, x);
        g[0][0] + g[1][1]
    }

    /// Effective stress 2 mu eps(u) + lambda div(u) I.
    pub fn stress(&self, t: f64, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (mu, lam) = (self.params.mu, self.params.lambda);
        let g = self.displacement_grad(t, x);
        let div = g[0][0] + g[1][1];
        let e01 = 0.5 * (g[0][1] + g[1][0]);
        [
            [2.0 * mu * g[0][0] + lam * div, 2.0 * mu * e01],
            [2.0 * mu * e01, 2.0 * mu * g[1][1] + lam * div],
        ]
    }

    /// Row-wise divergence of the effective stress.
    pub fn stress_div(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (mu, lam) = (self.params.mu, self.params.lambda);
        let s1 = (PI * x[0]).sin();
        let c1 = (PI * x[0]).cos();
        let s2 = (PI * x[1]).sin();
        let c2 = (PI * x[1]).cos();
        let s3 = (3.0 * PI * x[0]).sin();
        let c3 = (3.0 * PI * x[0]).cos();
        let s4 = (4.0 * PI * x[1]).sin();
        let c4 = (4.0 * PI * x[1]).cos();
        let tp2 = t * PI * PI;
        [
            tp2 * (-(3.0 * mu + lam) * s1 * s2 + 24.0 * (mu + lam) * c3 * c4),
            tp2 * ((mu + lam) * c1 * c2 - (82.0 * mu + 32.0 * lam) * s3 * s4),
        ]
    }

    pub fn pressure(&self, t: f64, x: [f64; 2]) -> f64 {
        let (g, _, _) = bump(x[0]);
        let (h, _, _) = bump(x[1]);
        (t + 1.0) * (g * h - 1.0 / 900.0)
    }

    pub fn pressure_rate(&self, x: [f64; 2]) -> f64 {
        let (g, _, _) = bump(x[0]);
        let (h, _, _) = bump(x[1]);
        g * h - 1.0 / 900.0
    }

    pub fn pressure_grad(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let (g, dg, _) = bump(x[0]);
        let (h, dh, _) = bump(x[1]);
        [(t + 1.0) * dg * h, (t + 1.0) * g * dh]
    }

    pub fn pressure_laplacian(&self, t: f64, x: [f64; 2]) -> f64 {
        let (g, _, ddg) = bump(x[0]);
        let (h, _, ddh) = bump(x[1]);
        (t + 1.0) * (ddg * h + g * ddh)
    }

    /// Darcy flux kappa grad(p); its normal trace vanishes on the boundary.
    pub fn flux(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let gp = self.pressure_grad(t, x);
        [self.params.kappa * gp[0], self.params.kappa * gp[1]]
    }

    pub fn flux_div(&self, t: f64, x: [f64; 2]) -> f64 {
        self.params.kappa * self.pressure_laplacian(t, x)
    }

    /// Momentum load: f = -div(sigma) - grad(p).
    pub fn load_f(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let ds = self.stress_div(t, x);
        let gp = self.pressure_grad(t, x);
        [-ds[0] - gp[0], -ds[1] - gp[1]]
    }

    /// Darcy load: identically zero because the flux is exactly kappa grad(p).
    pub fn load_g(&self, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    /// Mass load: s = div(du/dt) + div(z) - c0 dp/dt.
    pub fn load_s(&self, t: f64, x: [f64; 2]) -> f64 {
        let div_rate = self.div_displacement(1.0, x);
        div_rate + self.flux_div(t, x) - self.params.c0 * self.pressure_rate(x)
    }
}

/// Worst absolute residuals from re-checking the closed forms.
#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    /// Finite-difference mismatch of the displacement gradient.
    pub grad_displacement: f64,
    /// Finite-difference mismatch of the pressure gradient.
    pub grad_pressure: f64,
    /// Finite-difference mismatch of the flux divergence.
    pub div_flux: f64,
    /// f + div(sigma) + grad(p), stress divergence by finite differences.
    pub momentum: f64,
    /// z / kappa - grad(p).
    pub darcy: f64,
    /// s - div(du/dt) - div(z) + c0 dp/dt, time derivatives by differences.
    pub mass: f64,
    /// Displacement magnitude on the boundary.
    pub boundary_displacement: f64,
    /// Normal flux on the boundary.
    pub boundary_flux: f64,
    /// Mean pressure over the domain, by quadrature that is exact for it.
    pub pressure_mean: f64,
    /// Which equation residual was worst, and where.
    pub worst_equation: String,
    pub worst_t: f64,
    pub worst_x: [f64; 2],
}

impl VerifyReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.grad_displacement,
            self.grad_pressure,
            self.div_flux,
            self.momentum,
            self.darcy,
            self.mass,
            self.boundary_displacement,
            self.boundary_flux,
            self.pressure_mean,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Check every derived quantity against finite differences at randomly
/// sampled times and points, and the compatibility conditions (homogeneous
/// boundary data, zero-mean pressure) that the discretization relies on.
///
/// `n_samples` is the number of interior sample points; at least 100.
pub fn verify_manufactured(params: Params, n_samples: usize) -> VerifyReport {
    use rand::{Rng, SeedableRng};
    assert!(n_samples >= 100, "residual check needs at least 100 samples");
    let ex = exact_fields(params);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0b10);
    let mut report = VerifyReport::default();
    let h = 1e-6;

    for _ in 0..n_samples {
        let x = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
        {
            let t = rng.gen_range(0.0..1.0);
            // Displacement gradient vs finite differences.
            let g = ex.displacement_grad(t, x);
            for comp in 0..2 {
                let fdx = (ex.displacement(t, [x[0] + h, x[1]])[comp]
                    - ex.displacement(t, [x[0] - h, x[1]])[comp])
                    / (2.0 * h);
                let fdy = (ex.displacement(t, [x[0], x[1] + h])[comp]
                    - ex.displacement(t, [x[0], x[1] - h])[comp])
                    / (2.0 * h);
                report.grad_displacement = report
                    .grad_displacement
                    .max((g[comp][0] - fdx).abs())
                    .max((g[comp][1] - fdy).abs());
            }
            // Pressure gradient.
            let gp = ex.pressure_grad(t, x);
            let fpx = (ex.pressure(t, [x[0] + h, x[1]]) - ex.pressure(t, [x[0] - h, x[1]]))
                / (2.0 * h);
            let fpy = (ex.pressure(t, [x[0], x[1] + h]) - ex.pressure(t, [x[0], x[1] - h]))
                / (2.0 * h);
            report.grad_pressure = report
                .grad_pressure
                .max((gp[0] - fpx).abs())
                .max((gp[1] - fpy).abs());
            // Flux divergence.
            let dz = ex.flux_div(t, x);
            let fzx =
                (ex.flux(t, [x[0] + h, x[1]])[0] - ex.flux(t, [x[0] - h, x[1]])[0]) / (2.0 * h);
            let fzy =
                (ex.flux(t, [x[0], x[1] + h])[1] - ex.flux(t, [x[0], x[1] - h])[1]) / (2.0 * h);
            report.div_flux = report.div_flux.max((dz - (fzx + fzy)).abs());
            // Momentum: f + div(sigma) + grad(p) = 0 with div(sigma) by
            // central differences of the analytic stress.
            let f = ex.load_f(t, x);
            let ds0 = (ex.stress(t, [x[0] + h, x[1]])[0][0]
                - ex.stress(t, [x[0] - h, x[1]])[0][0])
                / (2.0 * h)
                + (ex.stress(t, [x[0], x[1] + h])[0][1]
                    - ex.stress(t, [x[0], x[1] - h])[0][1])
                    / (2.0 * h);
            let ds1 = (ex.stress(t, [x[0] + h, x[1]])[1][0]
                - ex.stress(t, [x[0] - h, x[1]])[1][0])
                / (2.0 * h)
                + (ex.stress(t, [x[0], x[1] + h])[1][1]
                    - ex.stress(t, [x[0], x[1] - h])[1][1])
                    / (2.0 * h);
            let momentum = (f[0] + ds0 + gp[0]).abs().max((f[1] + ds1 + gp[1]).abs());
            report.momentum = report.momentum.max(momentum);
            // Darcy: z / kappa = grad(p).
            let z = ex.flux(t, x);
            let darcy = (z[0] / params.kappa - gp[0])
                .abs()
                .max((z[1] / params.kappa - gp[1]).abs());
            report.darcy = report.darcy.max(darcy);
            // Mass balance with time derivatives by differences.
            let s = ex.load_s(t, x);
            let ht = 1e-6;
            let ddiv = (ex.div_displacement(t + ht, x) - ex.div_displacement(t - ht, x))
                / (2.0 * ht);
            let dp = (ex.pressure(t + ht, x) - ex.pressure(t - ht, x)) / (2.0 * ht);
            let mass = (s - ddiv - ex.flux_div(t, x) + params.c0 * dp).abs();
            report.mass = report.mass.max(mass);
            let prev = report.momentum.max(report.darcy).max(report.mass);
            for (label, value) in [("momentum", momentum), ("darcy", darcy), ("mass", mass)] {
                if value >= prev && value > 0.0 {
                    report.worst_equation = label.to_string();
                    report.worst_t = t;
                    report.worst_x = x;
                }
            }
        }
    }

    // Boundary compatibility: 100 points per side, worst over three times.
    for k in 0..100 {
        let a = (k as f64 + 0.5) / 100.0;
        for t in [0.0, 0.3, 1.0] {
            for (x, n) in [
                ([a, 0.0], [0.0, -1.0]),
                ([a, 1.0], [0.0, 1.0]),
                ([0.0, a], [-1.0, 0.0]),
                ([1.0, a], [1.0, 0.0]),
            ] {
                let u = ex.displacement(t, x);
                report.boundary_displacement = report
                    .boundary_displacement
                    .max(u[0].abs())
                    .max(u[1].abs());
                let z = ex.flux(t, x);
                report.boundary_flux =
                    report.boundary_flux.max((z[0] * n[0] + z[1] * n[1]).abs());
            }
        }
    }

    // Zero-mean pressure. The spatial profile is a degree-8 polynomial, so
    // a degree-8 rule over the two-triangle split of the square integrates
    // it exactly; the 1/900 offset is the bump's own mean.
    let rule = crate::refelem::quadrature(8).expect("degree-8 rule exists");
    let mut mean = 0.0;
    for (q, &w) in rule.points.iter().zip(&rule.weights) {
        // Both halves have unit Jacobian: (xi, eta) -> (xi + eta, eta)
        // and (xi, eta) -> (xi, xi + eta).
        mean += w * ex.pressure(0.7, [q[0] + q[1], q[1]]);
        mean += w * ex.pressure(0.7, [q[0], q[0] + q[1]]);
    }
    report.pressure_mean = mean.abs();

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_report_is_clean_for_defaults() {
        let report = verify_manufactured(Params::default(), 1000);
        assert!(report.grad_displacement < 1e-5, "{report:?}");
        assert!(report.grad_pressure < 1e-8, "{report:?}");
        assert!(report.div_flux < 1e-7, "{report:?}");
        assert!(report.momentum < 1e-4, "{report:?}");
        assert!(report.darcy < 1e-14, "{report:?}");
        assert!(report.mass < 1e-7, "{report:?}");
        assert!(report.boundary_displacement < 1e-13, "{report:?}");
        assert!(report.boundary_flux < 1e-14, "{report:?}");
        assert!(report.pressure_mean < 1e-12, "{report:?}");
        assert!(!report.worst_equation.is_empty(), "{report:?}");
        let inside = report.worst_x.iter().all(|&c| (0.0..1.0).contains(&c));
        assert!(inside, "{report:?}");
    }

    #[test]
    fn verify_report_is_clean_for_degenerate_parameters() {
        for (kappa, c0) in [(1e-4, 0.0), (1e-8, 1.0), (1e-12, 1e-12)] {
            let report = verify_manufactured(
                Params {
                    kappa,
                    c0,
                    ..Params::default()
                },
                1000,
            );
            assert!(report.momentum < 1e-4, "kappa {kappa} c0 {c0}: {report:?}");
            assert!(report.darcy < 1e-12, "kappa {kappa} c0 {c0}: {report:?}");
            assert!(report.mass < 1e-6, "kappa {kappa} c0 {c0}: {report:?}");
        }
    }

    #[test]
    fn pressure_midpoint_fixture() {
        // p(1, (1/2, 1/2)) = 2 (1/256 - 1/900) = 1288/230400.
        let ex = exact_fields(Params::default());
        let p = ex.pressure(1.0, [0.5, 0.5]);
        assert!((p - 1288.0 / 230400.0).abs() < 1e-15);
        assert!((p - 0.0055903).abs() < 5e-8);
    }

    #[test]
    fn fluid_load_is_identically_zero() {
        let ex = exact_fields(Params {
            kappa: 1e-8,
            ..Params::default()
        });
        for (t, x) in [(0.0, [0.3, 0.7]), (0.5, [0.9, 0.1]), (1.0, [0.5, 0.5])] {
            assert_eq!(ex.load_g(t, x), [0.0, 0.0]);
        }
    }

    #[test]
    fn displacement_vanishes_at_initial_time() {
        let ex = exact_fields(Params::default());
        for x in [[0.2, 0.3], [0.8, 0.6]] {
            assert_eq!(ex.displacement(0.0, x), [0.0, 0.0]);
            assert!(ex.pressure(0.0, x).abs() > 0.0 || x[0] == 0.0);
        }
    }

    #[test]
    fn flux_scales_linearly_with_permeability() {
        let x = [0.3, 0.8];
        let a = exact_fields(Params {
            kappa: 1.0,
            ..Params::default()
        });
        let b = exact_fields(Params {
            kappa: 1e-6,
            ..Params::default()
        });
        let za = a.flux(0.5, x);
        let zb = b.flux(0.5, x);
        assert!((za[0] * 1e-6 - zb[0]).abs() < 1e-18);
        assert!((za[1] * 1e-6 - zb[1]).abs() < 1e-18);
    }
}
