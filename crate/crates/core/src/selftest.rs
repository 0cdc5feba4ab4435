//! Small-scale oracle checks run by the `selftest` subcommand.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::{BsRisMatrix, ChannelVector, RngStream};
use crate::evaluation::link_rate;
use crate::geometry::{steering_vector, AnglePair, UpaGeometry};
use crate::optimizer::{
    alternating_optimize, mm_step, objective_rate, optimize_precoder, phase_quadratics,
    quadratic_ratio, surrogate_direction, AoConfig, PhaseProfile, Precoder, SystemMatrices,
};
use crate::spatial::CorrelationMatrix;
use crate::{CMatrix, CVector};

fn random_psd(l: usize, rank: usize, scale: f64, rng: &mut RngStream) -> CorrelationMatrix {
    let mut m = CMatrix::zeros(l, l);
    for _ in 0..rank {
        let x = rng.complex_normal_vector(l);
        m += &x * x.adjoint();
    }
    CorrelationMatrix(m * Complex64::new(scale, 0.0))
}

/// Random 2x2 system with unit noise and areas.
pub fn small_system(seed: u64) -> SystemMatrices {
    let mut rng = RngStream::new(seed);
    let h = CMatrix::from_fn(2, 2, |_, _| rng.complex_normal());
    SystemMatrices::new(
        BsRisMatrix(h),
        random_psd(2, 2, 1.0, &mut rng),
        random_psd(2, 2, 1.0, &mut rng),
        1.0,
        1.0,
        1.0,
        1.0,
    )
    .expect("valid system")
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

/// Unit-norm `(cos a, sin a e^{jb})` on an `n x n` grid.
fn grid_directions(n: usize) -> impl Iterator<Item = CVector> {
    (0..n).flat_map(move |i| {
        (0..n).map(move |k| {
            let a = 0.5 * PI * i as f64 / (n - 1) as f64;
            let b = 2.0 * PI * k as f64 / n as f64;
            CVector::from_vec(vec![
                Complex64::new(a.cos(), 0.0),
                Complex64::from_polar(a.sin(), b),
            ])
        })
    })
}

pub fn run() -> i32 {
    let mut all = true;

    let g = UpaGeometry::new(3, 5, 0.5).expect("geometry");
    let worst = (0..50)
        .map(|i| {
            let a = AnglePair {
                elevation: 0.06 * i as f64,
                azimuth: 0.13 * i as f64 - 3.0,
            };
            (steering_vector(&g, &a).norm() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    all &= check("steering_norm", worst < 1e-12, format!("max |‖a‖-1| = {worst:.2e}"));

    let rate = link_rate(
        &ChannelVector(CVector::from_element(1, Complex64::new(1.0, 0.0))),
        &PhaseProfile::ones(1),
        &BsRisMatrix(CMatrix::from_element(1, 1, Complex64::new(2.0, 0.0))),
        &Precoder(CVector::from_element(1, Complex64::new(1.0, 0.0))),
        1.0,
    );
    all &= check(
        "scalar_link_rate",
        (rate - 5f64.log2()).abs() < 1e-12,
        format!("{rate:.6} vs log2(5)"),
    );

    // precoder vs grid of unit directions
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_resid: f64 = 0.0;
    for seed in 0..5 {
        let sys = small_system(100 + seed);
        let phi = PhaseProfile::from_angles(&[0.3 * seed as f64, -1.1]);
        let sol = optimize_precoder(&phi, &sys).expect("precoder");
        worst_resid = worst_resid.max(sol.residual);
        let best = objective_rate(&sol.precoder, &phi, &sys);
        let grid_best = grid_directions(100)
            .map(|u| objective_rate(&Precoder(u), &phi, &sys))
            .fold(f64::NEG_INFINITY, f64::max);
        worst_gap = worst_gap.max(grid_best - best);
    }
    all &= check(
        "precoder_grid_oracle",
        worst_gap <= 1e-3 && worst_resid < 1e-8,
        format!("grid - optimized <= {worst_gap:.2e}, residual {worst_resid:.2e}"),
    );

    // surrogate argmax over a 60x60 phase grid
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..5 {
        let sys = small_system(200 + seed);
        let v = Precoder(CVector::from_vec(vec![
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
        ]));
        let (q_rx, q_e) = phase_quadratics(&v, &sys);
        let phi_t = PhaseProfile::from_angles(&[0.4, 2.0]);
        let dir = surrogate_direction(&phi_t, &q_rx, &q_e);
        let next = mm_step(&phi_t, &q_rx, &q_e);
        let attained = dir.dotc(&next.0).re;
        let mut grid_max = f64::NEG_INFINITY;
        for i in 0..60 {
            for k in 0..60 {
                let p = PhaseProfile::from_angles(&[
                    2.0 * PI * i as f64 / 60.0,
                    2.0 * PI * k as f64 / 60.0,
                ]);
                grid_max = grid_max.max(dir.dotc(&p.0).re);
            }
        }
        worst = worst.max(grid_max - attained);
    }
    all &= check(
        "mm_surrogate_argmax",
        worst <= 1e-6,
        format!("grid - attained <= {worst:.2e}"),
    );

    // objective identity between the two forms
    let mut worst: f64 = 0.0;
    let mut rng = RngStream::new(300);
    for seed in 0..20 {
        let sys = small_system(300 + seed);
        let v = Precoder(rng.complex_normal_vector(2));
        let phi = PhaseProfile::random(2, &mut rng);
        let (q_rx, q_e) = phase_quadratics(&v, &sys);
        let a = objective_rate(&v, &phi, &sys);
        let b = quadratic_ratio(&phi, &q_rx, &q_e).log2();
        worst = worst.max((a - b).abs() / a.abs().max(1e-300));
    }
    all &= check("objective_identity", worst < 1e-10, format!("max rel diff {worst:.2e}"));

    // AO never decreases its objective
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let sys = small_system(400 + seed);
        let out = alternating_optimize(&sys, &AoConfig::default()).expect("ao");
        worst = worst.max(out.trace.max_decrease());
    }
    all &= check("ao_monotone", worst <= 1e-9, format!("max decrease {worst:.2e}"));

    if all {
        println!("selftest: all checks passed");
        crate::cli::EXIT_OK
    } else {
        println!("selftest: failures");
        crate::cli::EXIT_FAILURE
    }
}
