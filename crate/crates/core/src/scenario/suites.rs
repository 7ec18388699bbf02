//! Fast seeded self-checks, runnable as `verify <suite>`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attenuation::solve_attenuation;
use crate::csda::{explicit_csda, solve_csda};
use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, DiscreteField, EnergyInterval, GridSpec, KernelFn, PhaseFn, SpaceEnergyFn};
use crate::geometry::{ConvexDomain, PhasePoint, Vec3};
use crate::norms::{h_norm, NormOrder};
use crate::quadrature::RayQuadrature;
use crate::scattering::{estimate_scatter_operator_norm, scatter_norm_bound, solve_scattering, IterationOptions};

use super::report::{Bound, PropertyResult, RunReport};

/// Suite names accepted by [`run_verification_suite`].
pub const SUITES: &[&str] = &["geometry", "attenuation", "scattering", "csda", "norms", "all"];

const SAMPLES: usize = 500;

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Uniform point of the ball `|x - c| <= radius`, by rejection.
fn random_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    loop {
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm_squared() <= 1.0 {
            return radius * p;
        }
    }
}

fn ellipsoid() -> ConvexDomain {
    ConvexDomain::ellipsoid([0.0; 3], [1.0, 0.7, 0.5]).expect("valid semi-axes")
}

fn small_grid(nodes: usize, n_energy: usize) -> Result<GridSpec> {
    GridSpec::new(
        ConvexDomain::unit_ball(),
        nodes,
        2,
        4,
        EnergyInterval::new(0.0, 1.0)?,
        n_energy,
    )
}

fn geometry(rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    let ball = ConvexDomain::unit_ball();
    let ell = ellipsoid();
    let (mut closed, mut transport) = (0.0f64, 0.0f64);
    for _ in 0..SAMPLES {
        let x = random_in_ball(rng, 0.95);
        let w = random_unit(rng);
        closed = closed.max((ball.extended_escape_time(&x, &w)? - ball.escape_time_by_root_finding(&x, &w)?).abs());
        // t̃ grows at unit rate along ω.
        let y = Vec3::new(x.x, 0.7 * x.y, 0.5 * x.z) * 0.9;
        for (d, p) in [(&ball, &x), (&ell, &y)] {
            if let Ok(g) = d.escape_time_gradient(p, &w) {
                transport = transport.max((g.dot(&w) - 1.0).abs());
            }
        }
    }
    report.push(PropertyResult::check(
        "geometry/closed_form_vs_root_finding",
        closed,
        Bound::AtMost(1e-10),
    ));
    report.push(PropertyResult::check(
        "geometry/transport_of_escape_time",
        transport,
        Bound::AtMost(1e-8),
    ));
    Ok(())
}

fn attenuation(rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    let (sigma, shift, f) = (1.5, 0.25, 2.0);
    let coeffs = CoefficientSet::constant(sigma, shift);
    let source = PhaseFn::constant(f);
    let quad = RayQuadrature::default();
    let mu = sigma + shift;
    let mut worst = 0.0f64;
    for d in [ConvexDomain::unit_ball(), ellipsoid()] {
        for _ in 0..SAMPLES / 2 {
            let x = d.project_to_boundary(&random_unit(rng)) * rng.random_range(0.0..0.99);
            let w = random_unit(rng);
            let t = d.extended_escape_time(&x, &w)?;
            let value = solve_attenuation(&d, &source, &coeffs, &PhasePoint::new(x, w, 0.0), &quad)?;
            worst = worst.max((value - f * (1.0 - (-mu * t).exp()) / mu).abs() / (f / mu));
        }
    }
    report.push(PropertyResult::check(
        "attenuation/closed_form",
        worst,
        Bound::AtMost(1e-10),
    ));
    Ok(())
}

fn scattering(rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    let grid = small_grid(8, 1)?;
    let kernel = KernelFn::new(|_, wi, wo, _| 0.3 * (1.0 + 0.5 * wi.dot(wo)) / (4.0 * std::f64::consts::PI));
    let bound = scatter_norm_bound(&kernel, 0, &grid);
    let estimate = estimate_scatter_operator_norm(&kernel, &grid, 0, 40, rng.random())?;
    report.push(PropertyResult::check(
        "scattering/norm_estimate_below_bound",
        estimate / bound,
        Bound::AtMost(1.0 + 1e-9),
    ));
    let shift = 1.0;
    let coeffs = CoefficientSet::constant(0.5, shift).with_scatter(kernel);
    let (_, it) = solve_scattering(
        &PhaseFn::constant(1.0),
        &coeffs,
        &grid,
        &RayQuadrature::default(),
        &IterationOptions::default(),
    )?;
    // Σ is constant, so only the kernel contributes to the threshold.
    report.push(PropertyResult::check(
        "scattering/contraction_rate",
        it.estimated_rate,
        Bound::AtMost(bound / (shift - (it.threshold - bound))),
    ));
    Ok(())
}

fn csda(rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    let d = ConvexDomain::unit_ball();
    let interval = EnergyInterval::new(0.0, 1.0)?;
    let quad = RayQuadrature::default();
    let (sigma, f) = (0.8, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let x = random_in_ball(rng, 0.99);
        let w = random_unit(rng);
        let e = rng.random_range(0.0..1.0);
        let length = d.extended_escape_time(&x, &w)?.min(1.0 - e);
        let value = explicit_csda(
            &d,
            &PhaseFn::constant(f),
            sigma,
            &interval,
            &PhasePoint::new(x, w, e),
            &quad,
        )?;
        worst = worst.max((value - f * (1.0 - (-sigma * length).exp()) / sigma).abs());
    }
    report.push(PropertyResult::check(
        "csda/explicit_closed_form",
        worst,
        Bound::AtMost(1e-12),
    ));

    let grid = small_grid(8, 2)?;
    let coeffs = CoefficientSet::constant(sigma, 0.0).with_stopping(SpaceEnergyFn::constant(-1.0), 1.0);
    let sol = solve_csda(
        &PhaseFn::constant(f),
        &coeffs,
        &grid,
        &quad,
        0.25,
        &IterationOptions::default(),
    )?;
    let last = sol.psi.grid().energy.len() - 1;
    let n = grid.lattice.n_interior();
    let final_slice = (0..grid.n_directions())
        .flat_map(|j| sol.psi.slice(j, last)[..n].to_vec())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    report.push(PropertyResult::check(
        "csda/final_energy_vanishing",
        final_slice,
        Bound::AtMost(1e-12),
    ));
    report.push(PropertyResult::check(
        "csda/inflow_trace_vanishing",
        sol.inflow_trace,
        Bound::AtMost(1e-10),
    ));
    Ok(())
}

fn norms(rng: &mut ChaCha8Rng, report: &mut RunReport) -> Result<()> {
    let grid = small_grid(10, 1)?;
    let values: Vec<f64> = (0..grid.field_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut a = DiscreteField::from_values(&grid, values)?;
    a.fill_ghosts();
    let b = DiscreteField::from_fn(&grid, |x, w, _| x.dot(w) + x.norm_squared())?;
    let c = -2.5;
    let (mut homogeneity, mut triangle) = (0.0f64, f64::INFINITY);
    for m in 0..=2 {
        let order = NormOrder::spatial(m);
        let na = h_norm(&a, order)?;
        homogeneity = homogeneity.max((h_norm(&a.scaled(c), order)? - c.abs() * na).abs() / na);
        let sum = h_norm(&a.zip_map(&b, |p, q| p + q), order)?;
        triangle = triangle.min(na + h_norm(&b, order)? - sum);
    }
    report.push(PropertyResult::check(
        "norms/homogeneity",
        homogeneity,
        Bound::AtMost(1e-12),
    ));
    report.push(PropertyResult::check(
        "norms/triangle_inequality_slack",
        triangle,
        Bound::AtLeast(0.0),
    ));
    Ok(())
}

/// Run one named suite (or `all`) with the given seed.
pub fn run_verification_suite(name: &str, seed: u64) -> Result<RunReport> {
    type Suite = fn(&mut ChaCha8Rng, &mut RunReport) -> Result<()>;
    let table: [(&str, Suite); 5] = [
        ("geometry", geometry),
        ("attenuation", attenuation),
        ("scattering", scattering),
        ("csda", csda),
        ("norms", norms),
    ];
    let chosen: Vec<_> = match name {
        "all" => table.to_vec(),
        _ => table.iter().copied().filter(|(n, _)| *n == name).collect(),
    };
    if chosen.is_empty() {
        return Err(Error::config(
            "suite",
            format!("unknown suite `{name}`; available: {}", SUITES.join(", ")),
        ));
    }
    let mut report = RunReport::new(seed);
    for (suite, run) in chosen {
        // Each suite gets its own stream so results do not depend on which
        // other suites ran.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(suite));
        let clock = Instant::now();
        run(&mut rng, &mut report)?;
        report.timings.insert(suite.to_string(), clock.elapsed().as_secs_f64());
        report.suites.push(suite.to_string());
    }
    Ok(report)
}

/// Stable string hash (FNV-1a) for seeding per-suite streams.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}
