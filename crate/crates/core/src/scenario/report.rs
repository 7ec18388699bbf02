use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::fields::GridMetadata;
use crate::scattering::IterationReport;

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Acceptance bound of a property.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// `measured <= value`.
    AtMost(f64),
    /// `measured >= value`.
    AtLeast(f64),
    /// `lo <= measured <= hi`.
    Within(f64, f64),
}

impl Bound {
    pub fn holds(&self, measured: f64) -> bool {
        match *self {
            Bound::AtMost(v) => measured <= v,
            Bound::AtLeast(v) => measured >= v,
            Bound::Within(lo, hi) => (lo..=hi).contains(&measured),
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Bound::AtMost(v) => write!(f, "<= {v:e}"),
            Bound::AtLeast(v) => write!(f, ">= {v:e}"),
            Bound::Within(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: Bound,
}

impl PropertyResult {
    pub fn check(name: impl Into<String>, measured: f64, bound: Bound) -> Self {
        Self {
            name: name.into(),
            pass: measured.is_finite() && bound.holds(measured),
            measured,
            bound,
        }
    }
}

/// One row of an energy-step convergence study.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub de: f64,
    pub relative_l2_error: f64,
    /// Error divided by the previous row's error.
    pub ratio: Option<f64>,
}

/// Machine-readable record of one run or verification suite.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    /// Echo of the scenario configuration, absent for bare suites.
    pub scenario: Option<serde_json::Value>,
    pub suites: Vec<String>,
    pub seed: u64,
    pub grid: Option<GridMetadata>,
    pub norms: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    pub iterations: Vec<IterationReport>,
    pub convergence: Vec<ErrorRow>,
    pub properties: Vec<PropertyResult>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            ..Self::default()
        }
    }

    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    pub fn push(&mut self, p: PropertyResult) {
        self.properties.push(p);
    }

    /// JSON without the `timings` field, for byte-level comparisons.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema_version {}", self.schema_version);
        if let Some(name) = self
            .scenario
            .as_ref()
            .and_then(|v| v.get("name"))
            .and_then(|v| v.as_str())
        {
            let _ = writeln!(s, "scenario {name}");
        }
        if !self.suites.is_empty() {
            let _ = writeln!(s, "suites {}", self.suites.join(", "));
        }
        let _ = writeln!(s, "seed {}", self.seed);
        if let Some(g) = &self.grid {
            let _ = writeln!(
                s,
                "grid h = {:.4e}, {} interior nodes, sphere {}x{}, {} energies on [{}, {}]",
                g.h, g.interior_nodes, g.n_theta, g.n_phi, g.n_energy, g.e0, g.em
            );
        }
        for (k, v) in &self.norms {
            let _ = writeln!(s, "norm {k} = {v:.6e}");
        }
        for (k, v) in &self.residuals {
            let _ = writeln!(s, "residual {k} = {v:.6e}");
        }
        for (i, it) in self.iterations.iter().enumerate() {
            let _ = writeln!(
                s,
                "iteration report {i}: {} iterations, rate {:.4}, converged {}",
                it.iterations, it.estimated_rate, it.converged
            );
        }
        for row in &self.convergence {
            let ratio = row.ratio.map_or_else(|| "-".to_string(), |r| format!("{r:.4}"));
            let _ = writeln!(s, "dE {:<10} error {:.6e} ratio {ratio}", row.de, row.relative_l2_error);
        }
        for p in &self.properties {
            let _ = writeln!(
                s,
                "{} {}: measured {:.6e}, bound {}",
                if p.pass { "PASS" } else { "FAIL" },
                p.name,
                p.measured,
                p.bound
            );
        }
        for (k, v) in &self.timings {
            let _ = writeln!(s, "time {k} = {v:.3} s");
        }
        s
    }
}
