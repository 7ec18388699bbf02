use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attenuation::solve_attenuation_grid;
use crate::csda::{explicit_csda, solve_csda};
use crate::error::{Error, Result};
use crate::fields::{kernel_support_check, CoefficientSet, DiscreteField, GridSpec, PhaseFn};
use crate::geometry::{PhasePoint, Vec3};
use crate::norms::{
    h0_margin, h_norm, trace_norm, NormOrder, TraceField, TraceSide, TraceWeighting, VANISHING_THRESHOLD,
};
use crate::quadrature::RayQuadrature;
use crate::scattering::{lift_inflow, scatter_norm_bound, solve_scattering, solve_with_inflow, IterationReport};

use super::report::{Bound, ErrorRow, PropertyResult, RunReport};
use super::suites::run_verification_suite;
use super::{KernelSpec, ProblemKind, Scenario};

/// Command-line overrides of a scenario.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Output directory; falls back to the scenario's `output` field.
    pub out: Option<PathBuf>,
    /// Seed; falls back to the scenario's `seed` field.
    pub seed: Option<u64>,
}

/// A finished run: the report and the computed field, if any.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub psi: Option<DiscreteField>,
}

pub(crate) fn property_names(kind: ProblemKind) -> &'static [&'static str] {
    match kind {
        ProblemKind::Attenuation => &["closed_form_agreement", "nonnegativity", "support_preservation"],
        ProblemKind::Scattering => &["converged", "contraction", "nonnegativity", "support_preservation"],
        ProblemKind::ScatteringWithInflow => &["converged", "contraction", "lift_constancy"],
        ProblemKind::Csda => &[
            "final_energy_vanishing",
            "inflow_trace_vanishing",
            "halving_ratio",
            "nonnegativity",
        ],
        ProblemKind::ExplicitCsda => &["final_energy_vanishing", "nonnegativity"],
    }
}

/// Tolerance on `|ψ(E_m)|`, which the march sets exactly.
const FINAL_ENERGY_TOL: f64 = 1e-12;
/// Tolerance on the inflow trace of a CSDA solution.
const INFLOW_TRACE_TOL: f64 = 1e-10;
/// Relative tolerance of the constant-coefficient closed form.
const CLOSED_FORM_TOL: f64 = 1e-10;
/// Tolerance of the lift identity `L(x + sω) = e^{-λs} L(x)`.
const LIFT_TOL: f64 = 1e-12;
/// First-order convergence in `ΔE` halves the error per halving.
const HALVING_RATIO: (f64, f64) = (0.4, 0.6);

struct Ctx<'a> {
    sc: &'a Scenario,
    grid: GridSpec,
    coeffs: CoefficientSet,
    quad: RayQuadrature,
    source: PhaseFn,
    seed: u64,
}

#[derive(Default)]
struct Solved {
    psi: Option<DiscreteField>,
    iterations: Vec<IterationReport>,
    inflow_trace: Option<f64>,
    convergence: Vec<ErrorRow>,
}

/// Why a property cannot be evaluated for this scenario, if it cannot.
fn inapplicable(ctx: &Ctx, name: &str) -> Option<String> {
    let sc = ctx.sc;
    let c = &sc.coefficients;
    match name {
        "closed_form_agreement" => (c.sigma.constant_value().is_none() || sc.source.constant_value().is_none())
            .then(|| "needs constant sigma and source".into()),
        "nonnegativity" => {
            let kernel_ok = match &c.scatter {
                None => true,
                Some(KernelSpec::Isotropic { strength }) | Some(KernelSpec::InteriorIsotropic { strength, .. }) => {
                    *strength >= 0.0
                }
                Some(KernelSpec::LinearAnisotropic { strength, anisotropy }) => {
                    *strength >= 0.0 && anisotropy.abs() <= 1.0
                }
            };
            (!(sc.source.is_nonnegative() && kernel_ok)).then(|| "needs a nonnegative source and kernel".into())
        }
        "support_preservation" => match sc.source.margin() {
            None => Some("needs a margin_source".into()),
            Some(margin) => c.scatter.as_ref().and_then(|k| {
                let report = kernel_support_check(&k.build(), 1, margin, &ctx.grid);
                (!report.pass).then(|| format!("kernel does not vanish within {margin} of the boundary"))
            }),
        },
        "contraction" => c.scatter.is_none().then(|| "needs a scattering kernel".into()),
        "lift_constancy" => sc.inflow.is_none().then(|| "needs inflow data".into()),
        "final_energy_vanishing" => (ctx.grid.energy.len() < 2 && sc.problem == ProblemKind::ExplicitCsda)
            .then(|| "needs at least two energy nodes".into()),
        "halving_ratio" => {
            if sc.csda.as_ref().is_none_or(|b| b.halvings == 0) {
                Some("needs csda.halvings >= 1".into())
            } else {
                explicit_reference_issue(sc)
            }
        }
        _ => None,
    }
}

/// The explicit CSDA solution needs `a = -1`, constant Σ and no scattering.
fn explicit_reference_issue(sc: &Scenario) -> Option<String> {
    let c = &sc.coefficients;
    let a_ok = c.stopping.as_ref().is_some_and(|s| s.value == -1.0);
    (!(a_ok && c.sigma.constant_value().is_some() && c.scatter.is_none()))
        .then(|| "the explicit solution needs stopping value -1, constant sigma and no scattering".into())
}

/// Whether a property runs when the scenario lists none.
///
/// Lattice interpolation of the collision source and of the carried CSDA
/// field can undershoot by a fraction of a percent, so nonnegativity is only
/// a default where every nodal value is a direct characteristic integral.
fn is_default(kind: ProblemKind, name: &str) -> bool {
    name != "nonnegativity" || matches!(kind, ProblemKind::Attenuation | ProblemKind::ExplicitCsda)
}

/// Properties to evaluate: the requested ones, or every applicable default.
fn selected_properties(ctx: &Ctx) -> Result<Vec<&'static str>> {
    let all = property_names(ctx.sc.problem);
    if ctx.sc.properties.is_empty() {
        return Ok(all
            .iter()
            .copied()
            .filter(|p| is_default(ctx.sc.problem, p) && inapplicable(ctx, p).is_none())
            .collect());
    }
    let mut out = Vec::new();
    for name in &ctx.sc.properties {
        let p = *all
            .iter()
            .find(|p| **p == name.as_str())
            .ok_or_else(|| Error::config("properties", format!("unknown property `{name}`")))?;
        if let Some(why) = inapplicable(ctx, p) {
            return Err(Error::config("properties", format!("`{p}` is not applicable: {why}")));
        }
        out.push(p);
    }
    Ok(out)
}

fn relative_l2(computed: &DiscreteField, exact: &DiscreteField) -> f64 {
    let err = computed.zip_map(exact, |a, b| a - b).l2_norm();
    let scale = exact.l2_norm();
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn explicit_field(ctx: &Ctx, grid: &GridSpec) -> Result<DiscreteField> {
    let sigma = ctx.sc.coefficients.sigma.constant_value().unwrap_or(0.0);
    let domain = &ctx.grid.domain;
    let interval = ctx.grid.energy.interval;
    let mut out = DiscreteField::zeros(grid);
    out.try_fill_interior(|_, _, _, x, w, e| {
        explicit_csda(
            domain,
            &ctx.source,
            sigma,
            &interval,
            &PhasePoint::new(*x, *w, e),
            &ctx.quad,
        )
    })?;
    Ok(out)
}

fn solve(ctx: &Ctx, want_halvings: bool) -> Result<Solved> {
    let sc = ctx.sc;
    let mut out = Solved::default();
    match sc.problem {
        ProblemKind::Attenuation => {
            out.psi = Some(solve_attenuation_grid(&ctx.source, &ctx.coeffs, &ctx.grid, &ctx.quad)?);
        }
        ProblemKind::Scattering => {
            let (psi, report) = solve_scattering(&ctx.source, &ctx.coeffs, &ctx.grid, &ctx.quad, &sc.iteration)?;
            out.psi = Some(psi);
            out.iterations.push(report);
        }
        ProblemKind::ScatteringWithInflow => {
            let inflow = sc.inflow.as_ref().expect("validated");
            let g = inflow.data.build(&ctx.grid.domain, ctx.grid.energy.interval);
            let (psi, report) = solve_with_inflow(
                &ctx.source,
                &g,
                inflow.lambda,
                &ctx.coeffs,
                &ctx.grid,
                &ctx.quad,
                &sc.iteration,
            )?;
            out.psi = Some(psi);
            out.iterations.push(report);
        }
        ProblemKind::Csda => {
            let block = sc.csda.as_ref().expect("validated");
            let runs = if want_halvings { block.halvings } else { 0 };
            let mut previous: Option<f64> = None;
            for level in 0..=runs {
                let de = block.de / f64::from(1u32 << level);
                let sol = solve_csda(&ctx.source, &ctx.coeffs, &ctx.grid, &ctx.quad, de, &sc.iteration)?;
                if want_halvings {
                    let reference = explicit_field(ctx, sol.psi.grid())?;
                    let error = relative_l2(&sol.psi, &reference);
                    out.convergence.push(ErrorRow {
                        de,
                        relative_l2_error: error,
                        ratio: previous.map(|p| error / p),
                    });
                    previous = Some(error);
                }
                if level == 0 {
                    out.inflow_trace = Some(sol.inflow_trace);
                    out.iterations = sol.reports;
                    out.psi = Some(sol.psi);
                }
            }
        }
        ProblemKind::ExplicitCsda => {
            if let Some(why) = explicit_reference_issue(sc) {
                return Err(Error::config("problem", why));
            }
            out.psi = Some(explicit_field(ctx, &ctx.grid)?);
        }
    }
    Ok(out)
}

/// Smallest `t̃` at an interior node where `|ψ|` reaches the vanishing
/// threshold, capped at the diameter. Unlike [`h0_margin`] this reads nodal
/// values only, so no interpolation stencil reaches across the support edge.
fn nodal_margin(psi: &DiscreteField) -> f64 {
    let grid = psi.grid();
    let lat = &grid.lattice;
    let mut eta = grid.domain.diameter();
    for (j, _, slice) in psi.slices() {
        let w = grid.sphere.nodes()[j];
        for (n, v) in slice[..lat.n_interior()].iter().enumerate() {
            if v.abs() >= VANISHING_THRESHOLD {
                eta = eta.min(grid.domain.extended_escape_time(&lat.position(n), &w).unwrap_or(0.0));
            }
        }
    }
    eta
}

fn interior_values(psi: &DiscreteField) -> impl Iterator<Item = f64> + '_ {
    let n = psi.grid().lattice.n_interior();
    psi.slices().flat_map(move |(_, _, s)| s[..n].iter().copied())
}

fn evaluate(ctx: &Ctx, name: &str, solved: &Solved) -> Result<PropertyResult> {
    let psi = solved.psi.as_ref().expect("every problem yields a field");
    let grid = psi.grid();
    Ok(match name {
        "closed_form_agreement" => {
            let sigma = ctx.sc.coefficients.sigma.constant_value().unwrap_or(0.0);
            let f = ctx.sc.source.constant_value().unwrap_or(0.0);
            let mu = sigma + ctx.coeffs.shift;
            let domain = &grid.domain;
            let exact = DiscreteField::from_fn(grid, |x, w, _| {
                let t = domain.extended_escape_time(x, w).unwrap_or(0.0);
                if mu == 0.0 {
                    f * t
                } else {
                    f * (1.0 - (-mu * t).exp()) / mu
                }
            })?;
            let scale = exact.sup_abs().max(f64::MIN_POSITIVE);
            let err = interior_values(psi)
                .zip(interior_values(&exact))
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            PropertyResult::check(name, err / scale, Bound::AtMost(CLOSED_FORM_TOL))
        }
        "nonnegativity" => {
            let min = interior_values(psi).fold(f64::INFINITY, f64::min);
            let scale = psi.sup_abs().max(f64::MIN_POSITIVE);
            PropertyResult::check(name, (min / scale).min(0.0), Bound::AtLeast(-1e-10))
        }
        "support_preservation" => {
            let margin = ctx.sc.source.margin().unwrap_or(0.0);
            // With scattering the collision source is interpolated from a
            // stencil reaching two cells in each axis.
            let slack = if ctx.sc.coefficients.scatter.is_some() {
                2.0 * 3f64.sqrt() * grid.h()
            } else {
                0.0
            };
            PropertyResult::check(name, nodal_margin(psi), Bound::AtLeast(margin - slack))
        }
        "converged" => {
            let last = solved
                .iterations
                .iter()
                .filter_map(|r| r.residual_history.last().copied())
                .fold(0.0f64, f64::max);
            PropertyResult::check(name, last, Bound::AtMost(ctx.sc.iteration.tol))
        }
        "contraction" => {
            let kernel = ctx.coeffs.scatter.as_ref().expect("checked applicable");
            let m = ctx.sc.iteration.order;
            let bound = scatter_norm_bound(kernel, m, &ctx.grid);
            let threshold = solved.iterations.first().map_or(0.0, |r| r.threshold);
            let denominator = ctx.coeffs.shift - (threshold - bound);
            let rate = solved
                .iterations
                .iter()
                .map(|r| r.estimated_rate)
                .fold(0.0f64, f64::max);
            PropertyResult::check(name, rate, Bound::AtMost(bound / denominator))
        }
        "lift_constancy" => {
            let inflow = ctx.sc.inflow.as_ref().expect("checked applicable");
            let g = inflow.data.build(&grid.domain, grid.energy.interval);
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let domain = &grid.domain;
            let lat = &grid.lattice;
            let mut worst = 0.0f64;
            for _ in 0..256 {
                let x = lat.position(rng.random_range(0..lat.n_interior()));
                let j = rng.random_range(0..grid.n_directions());
                let w = grid.sphere.nodes()[j];
                let e = grid.energy.nodes[rng.random_range(0..grid.energy.len())];
                let forward = domain.extended_escape_time(&x, &(-w))?;
                let s = rng.random_range(0.0..1.0) * forward;
                let at = |y: Vec3| lift_inflow(domain, &g, inflow.lambda, &PhasePoint::new(y, w, e)).map(|l| l.value);
                let diff = at(x + s * w)? - (-inflow.lambda * s).exp() * at(x)?;
                worst = worst.max(diff.abs());
            }
            PropertyResult::check(name, worst, Bound::AtMost(LIFT_TOL))
        }
        "final_energy_vanishing" => {
            let last = grid.energy.len() - 1;
            let n = grid.lattice.n_interior();
            let max = (0..grid.n_directions())
                .flat_map(|j| psi.slice(j, last)[..n].iter().copied())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            PropertyResult::check(name, max, Bound::AtMost(FINAL_ENERGY_TOL))
        }
        "inflow_trace_vanishing" => PropertyResult::check(
            name,
            solved.inflow_trace.unwrap_or(f64::NAN),
            Bound::AtMost(INFLOW_TRACE_TOL),
        ),
        "halving_ratio" => {
            let ratio = solved.convergence.last().and_then(|r| r.ratio).unwrap_or(f64::NAN);
            PropertyResult::check(name, ratio, Bound::Within(HALVING_RATIO.0, HALVING_RATIO.1))
        }
        other => return Err(Error::config("properties", format!("unknown property `{other}`"))),
    })
}

fn record_norms(report: &mut RunReport, psi: &DiscreteField) -> Result<()> {
    report.norms.insert("l2".into(), psi.l2_norm());
    if let Ok(h1) = h_norm(psi, NormOrder::spatial(1)) {
        report.norms.insert("h1".into(), h1);
    }
    let outflow = TraceField::of_field(psi, TraceSide::Outflow);
    report.norms.insert(
        "outflow_trace_plain".into(),
        trace_norm(&outflow, TraceWeighting::Plain)?,
    );
    report
        .norms
        .insert("outflow_trace_tau".into(), trace_norm(&outflow, TraceWeighting::Tau)?);
    report.norms.insert("h0_margin".into(), h0_margin(psi).eta);
    Ok(())
}

/// Run a parsed scenario and its attached verification suites.
pub fn execute(sc: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let seed = opts.seed.unwrap_or(sc.seed);
    let mut report = RunReport::new(seed);
    report.scenario = Some(serde_json::to_value(sc).map_err(|e| Error::config("scenario", e.to_string()))?);
    let grid = sc.grid_spec()?;
    report.grid = Some(grid.metadata());
    let coeffs = sc.coefficient_set(&grid);
    let source = sc.source.build(&grid.domain, grid.energy.interval);
    let ctx = Ctx {
        sc,
        coeffs,
        quad: sc.ray_quadrature(),
        source,
        seed,
        grid,
    };
    let properties = selected_properties(&ctx)?;

    let clock = Instant::now();
    let solved = solve(&ctx, properties.contains(&"halving_ratio"))?;
    report.timings.insert("solve".into(), clock.elapsed().as_secs_f64());
    report.iterations.clone_from(&solved.iterations);
    report.convergence.clone_from(&solved.convergence);
    if let Some(t) = solved.inflow_trace {
        report.residuals.insert("csda_inflow_trace".into(), t);
    }

    let clock = Instant::now();
    if let Some(psi) = &solved.psi {
        record_norms(&mut report, psi)?;
    }
    for p in &properties {
        report.push(evaluate(&ctx, p, &solved)?);
    }
    report
        .timings
        .insert("properties".into(), clock.elapsed().as_secs_f64());

    for suite in &sc.verify {
        let sub = run_verification_suite(suite, seed)?;
        merge_suite(&mut report, sub);
    }
    Ok(RunOutput {
        report,
        psi: solved.psi,
    })
}

pub(crate) fn merge_suite(report: &mut RunReport, sub: RunReport) {
    report.suites.extend(sub.suites);
    report.properties.extend(sub.properties);
    report.residuals.extend(sub.residuals);
    for (k, v) in sub.timings {
        report.timings.insert(format!("suite {k}"), v);
    }
}

/// Parse, run and (if an output directory is known) write a scenario file.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<RunOutput> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let sc = Scenario::from_json(&text)?;
    let out = execute(&sc, opts)?;
    if let Some(dir) = opts.out.as_ref().or(sc.output.as_ref()) {
        write_outputs(&out, dir)?;
    }
    Ok(out)
}

/// Write `report.json`, `report.txt` and, when a field exists,
/// `psi_slice.csv` (the lattice plane through the domain centre) to `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("report.json"), json + "\n").map_err(io)?;
    fs::write(dir.join("report.txt"), out.report.to_text()).map_err(io)?;
    if let Some(psi) = &out.psi {
        let mut file = std::io::BufWriter::new(fs::File::create(dir.join("psi_slice.csv")).map_err(io)?);
        write_slice_csv(psi, &mut file).map_err(io)?;
        file.flush().map_err(io)?;
    }
    Ok(())
}

/// CSV rows `x,y,z,omega_index,E,value` on the lattice plane closest to
/// the centre of the domain.
pub fn write_slice_csv(psi: &DiscreteField, w: &mut impl std::io::Write) -> std::io::Result<()> {
    let grid = psi.grid();
    let lat = &grid.lattice;
    let cz = grid.domain.center().z;
    let nodes: Vec<usize> = (0..lat.n_interior()).collect();
    let plane = nodes
        .iter()
        .map(|&n| lat.position(n).z)
        .min_by(|a, b| (a - cz).abs().total_cmp(&(b - cz).abs()));
    writeln!(w, "x,y,z,omega_index,E,value")?;
    let Some(plane) = plane else { return Ok(()) };
    let on_plane: Vec<usize> = nodes
        .into_iter()
        .filter(|&n| (lat.position(n).z - plane).abs() < 1e-9 * lat.spacing())
        .collect();
    for (k, &e) in grid.energy.nodes.iter().enumerate() {
        for j in 0..grid.n_directions() {
            let slice = psi.slice(j, k);
            for &n in &on_plane {
                let x = lat.position(n);
                writeln!(w, "{},{},{},{j},{e},{}", x.x, x.y, x.z, slice[n])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::ATTENUATION;

    #[test]
    fn attenuation_scenario_matches_closed_form() {
        let sc = Scenario::from_json(ATTENUATION).unwrap();
        let out = execute(&sc, &RunOptions::default()).unwrap();
        assert!(out.report.all_pass(), "{}", out.report.to_text());
        let names: Vec<_> = out.report.properties.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["closed_form_agreement", "nonnegativity"]);
    }

    #[test]
    fn slice_csv_has_header_and_rows() {
        let sc = Scenario::from_json(ATTENUATION).unwrap();
        let out = execute(&sc, &RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_slice_csv(out.psi.as_ref().unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,z,omega_index,E,value"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 6);
        assert!(row[2].abs() < 0.2);
    }
}
