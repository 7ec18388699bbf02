//! Scenario runner: JSON configuration, solver pipelines, verification
//! suites and the machine-readable run report.
//!
//! A scenario names a domain, a grid, coefficients drawn from a small
//! catalog of analytic fields, a problem kind and the properties to check.
//! [`run_scenario`] executes it and writes `report.json`, `report.txt` and a
//! CSV slice of the solution to the output directory.

mod catalog;
mod report;
mod run;
mod suites;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, EnergyInterval, GridSpec};
use crate::geometry::ConvexDomain;
use crate::quadrature::RayQuadrature;
use crate::scattering::IterationOptions;

pub use catalog::{EnergyProfile, FieldShape, FieldSpec, KernelSpec, StoppingSpec};
pub use report::{Bound, ErrorRow, PropertyResult, RunReport, SCHEMA_VERSION};
pub use run::{execute, run_scenario, write_outputs, write_slice_csv, RunOptions, RunOutput};
pub use suites::{run_verification_suite, SUITES};

/// Which pipeline a scenario runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Attenuation,
    Scattering,
    ScatteringWithInflow,
    Csda,
    ExplicitCsda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    UnitBall,
    Ball { center: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], semi_axes: [f64; 3] },
}

impl DomainSpec {
    pub fn build(&self) -> Result<ConvexDomain> {
        match self {
            DomainSpec::UnitBall => Ok(ConvexDomain::unit_ball()),
            DomainSpec::Ball { center, radius } => ConvexDomain::ball(*center, *radius),
            DomainSpec::Ellipsoid { center, semi_axes } => ConvexDomain::ellipsoid(*center, *semi_axes),
        }
        .map_err(|e| Error::config("domain", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBlock {
    pub e0: f64,
    pub em: f64,
    pub nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    /// Lattice nodes across the longest extent of the domain.
    pub nodes: usize,
    /// Gauss–Legendre polar nodes of the product sphere rule.
    pub polar: usize,
    /// Azimuthal nodes of the product sphere rule.
    pub azimuthal: usize,
    pub energy: EnergyBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsBlock {
    pub sigma: FieldSpec,
    #[serde(default)]
    pub shift: f64,
    #[serde(default)]
    pub scatter: Option<KernelSpec>,
    #[serde(default)]
    pub stopping: Option<StoppingSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RayBlock {
    pub panels_per_unit: usize,
    pub nodes_per_panel: usize,
}

impl Default for RayBlock {
    fn default() -> Self {
        Self {
            panels_per_unit: 16,
            nodes_per_panel: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowBlock {
    pub data: FieldSpec,
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsdaBlock {
    pub de: f64,
    /// Extra runs at `de/2, de/4, …` compared against the explicit solution.
    #[serde(default)]
    pub halvings: usize,
}

/// A parsed scenario configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub problem: ProblemKind,
    pub domain: DomainSpec,
    pub grid: GridBlock,
    pub coefficients: CoefficientsBlock,
    pub source: FieldSpec,
    #[serde(default)]
    pub inflow: Option<InflowBlock>,
    #[serde(default)]
    pub iteration: IterationOptions,
    #[serde(default)]
    pub ray: RayBlock,
    #[serde(default)]
    pub csda: Option<CsdaBlock>,
    /// Properties to check; empty selects the defaults of the problem kind.
    #[serde(default)]
    pub properties: Vec<String>,
    /// Verification suites appended to the run.
    #[serde(default)]
    pub verify: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

const MAX_NODES: usize = 256;
const MAX_SPHERE: usize = 64;

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "scenario".to_string() } else { path };
            Error::config(key, e.inner().to_string())
        })?;
        sc.validate()?;
        Ok(sc)
    }

    /// Range checks; catalog names are checked by deserialization.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(4..=MAX_NODES).contains(&g.nodes) {
            return Err(Error::config("grid.nodes", format!("must lie in [4, {MAX_NODES}]")));
        }
        if !(1..=MAX_SPHERE).contains(&g.polar) {
            return Err(Error::config("grid.polar", format!("must lie in [1, {MAX_SPHERE}]")));
        }
        if !(1..=2 * MAX_SPHERE).contains(&g.azimuthal) {
            return Err(Error::config(
                "grid.azimuthal",
                format!("must lie in [1, {}]", 2 * MAX_SPHERE),
            ));
        }
        if g.energy.nodes == 0 {
            return Err(Error::config("grid.energy.nodes", "must be positive"));
        }
        EnergyInterval::new(g.energy.e0, g.energy.em).map_err(|e| Error::config("grid.energy", e.to_string()))?;
        if !(1..=64).contains(&self.ray.panels_per_unit) {
            return Err(Error::config("ray.panels_per_unit", "must lie in [1, 64]"));
        }
        if !(1..=32).contains(&self.ray.nodes_per_panel) {
            return Err(Error::config("ray.nodes_per_panel", "must lie in [1, 32]"));
        }
        if !(self.iteration.tol > 0.0) {
            return Err(Error::config("iteration.tol", "must be positive"));
        }
        if !self.coefficients.shift.is_finite() {
            return Err(Error::config("coefficients.shift", "must be finite"));
        }
        match self.problem {
            ProblemKind::ScatteringWithInflow if self.inflow.is_none() => {
                return Err(Error::config("inflow", "required for scattering_with_inflow"));
            }
            ProblemKind::Csda | ProblemKind::ExplicitCsda if self.coefficients.stopping.is_none() => {
                return Err(Error::config("coefficients.stopping", "required for CSDA problems"));
            }
            ProblemKind::Csda if self.csda.is_none() => {
                return Err(Error::config("csda", "required for the csda problem"));
            }
            ProblemKind::Attenuation if self.coefficients.scatter.is_some() => {
                return Err(Error::config(
                    "coefficients.scatter",
                    "attenuation problems have no scattering",
                ));
            }
            _ => {}
        }
        if let Some(c) = &self.csda {
            if !(c.de > 0.0) {
                return Err(Error::config("csda.de", "must be positive"));
            }
            if c.halvings > 4 {
                return Err(Error::config("csda.halvings", "at most 4"));
            }
        }
        for name in &self.properties {
            if !run::property_names(self.problem).contains(&name.as_str()) {
                return Err(Error::config(
                    "properties",
                    format!(
                        "unknown property `{name}` for {:?}; available: {}",
                        self.problem,
                        run::property_names(self.problem).join(", ")
                    ),
                ));
            }
        }
        for s in &self.verify {
            if !SUITES.contains(&s.as_str()) {
                return Err(Error::config("verify", format!("unknown suite `{s}`")));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<ConvexDomain> {
        self.domain.build()
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        let interval = EnergyInterval::new(g.energy.e0, g.energy.em)?;
        GridSpec::new(self.domain()?, g.nodes, g.polar, g.azimuthal, interval, g.energy.nodes)
            .map_err(|e| Error::config("grid", e.to_string()))
    }

    pub fn coefficient_set(&self, grid: &GridSpec) -> CoefficientSet {
        let interval = grid.energy.interval;
        let c = &self.coefficients;
        let mut set = CoefficientSet::new(c.sigma.build(&grid.domain, interval), c.shift);
        if let Some(k) = &c.scatter {
            set = set.with_scatter(k.build());
        }
        if let Some(s) = &c.stopping {
            set = set.with_stopping(s.build(), s.kappa);
        }
        set
    }

    pub fn ray_quadrature(&self) -> RayQuadrature {
        RayQuadrature::new(self.ray.panels_per_unit, self.ray.nodes_per_panel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const ATTENUATION: &str = r#"{
        "name": "unit-ball attenuation",
        "problem": "attenuation",
        "domain": {"kind": "unit_ball"},
        "grid": {"nodes": 10, "polar": 2, "azimuthal": 4, "energy": {"e0": 0.0, "em": 1.0, "nodes": 1}},
        "coefficients": {"sigma": {"kind": "constant", "value": 0.0}},
        "source": {"kind": "constant", "value": 1.0}
    }"#;

    #[test]
    fn parses_minimal_scenario() {
        let sc = Scenario::from_json(ATTENUATION).unwrap();
        assert_eq!(sc.problem, ProblemKind::Attenuation);
        assert_eq!(sc.ray, RayBlock::default());
        assert_eq!(sc.iteration, IterationOptions::default());
    }

    #[test]
    fn config_errors_name_the_key() {
        let bad = ATTENUATION.replace("\"nodes\": 10", "\"nodes\": 2");
        match Scenario::from_json(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "grid.nodes"),
            other => panic!("{other:?}"),
        }
        let typo = ATTENUATION.replace("\"source\"", "\"sauce\"");
        match Scenario::from_json(&typo) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "sauce"),
            other => panic!("{other:?}"),
        }
        let kernel = ATTENUATION.replace(
            r#""sigma": {"kind": "constant", "value": 0.0}"#,
            r#""sigma": {"kind": "constant", "value": 0.0}, "scatter": {"kind": "nonsense"}"#,
        );
        assert!(matches!(Scenario::from_json(&kernel), Err(Error::Config { .. })));
    }

    #[test]
    fn unknown_property_is_rejected() {
        let bad = ATTENUATION.replace(
            r#""source": {"kind": "constant", "value": 1.0}"#,
            r#""source": {"kind": "constant", "value": 1.0}, "properties": ["flux_capacitor"]"#,
        );
        assert!(matches!(Scenario::from_json(&bad), Err(Error::Config { key, .. }) if key == "properties"));
    }
}
