//! JSON records and CSV tables for gaskets, functions and solver reports.
//!
//! Records hold plain data only. A function refers to its level by `(N, m)`;
//! loading rebuilds the level, which is cheap and exact.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::critical::{
    OrderingCheck, PipelineStatus, Regime, SolutionKind, SolutionReport, SolveOptions, ThreeSolutions,
};
use crate::energy::DiscreteFunction;
use crate::error::{precondition, Error, Result};
use crate::functional::FunctionalContext;
use crate::gasket::{build_level, GasketLevel};
use crate::nonlinearity::{power_problem, ProblemSpec};
use crate::thresholds::ThresholdReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRef {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: u32,
}

impl LevelRef {
    pub fn of(level: &GasketLevel) -> Self {
        Self {
            n: level.n(),
            m: level.m(),
        }
    }

    pub fn build(&self) -> Result<Arc<GasketLevel>> {
        Ok(Arc::new(build_level(self.n, self.m)?))
    }
}

/// Full description of a level: barycentric numerators over `denominator`,
/// edges, cells, boundary indices and quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasketRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: u32,
    pub vertices: Vec<Vec<u64>>,
    pub denominator: u64,
    pub edges: Vec<[usize; 2]>,
    pub cells: Vec<Vec<usize>>,
    pub boundary: Vec<usize>,
    pub weights: Vec<f64>,
}

impl GasketRecord {
    pub fn from_level(level: &GasketLevel) -> Self {
        Self {
            n: level.n(),
            m: level.m(),
            vertices: (0..level.vertex_count())
                .map(|v| level.vertex(v).to_vec())
                .collect(),
            denominator: level.denominator(),
            edges: level.edges().to_vec(),
            cells: level.cells().map(<[usize]>::to_vec).collect(),
            boundary: level.boundary().collect(),
            weights: level.weights().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub level_ref: LevelRef,
    pub values: Vec<f64>,
    pub zero_boundary: bool,
}

impl FunctionRecord {
    pub fn from_function(u: &DiscreteFunction) -> Self {
        Self {
            level_ref: LevelRef::of(u.level()),
            values: u.values().to_vec(),
            zero_boundary: u.is_zero_boundary(),
        }
    }

    /// Rebuilds the function on a freshly constructed level.
    pub fn load(&self) -> Result<DiscreteFunction> {
        self.load_on(&self.level_ref.build()?)
    }

    /// Rebuilds the function on `level`, which must match `level_ref`.
    pub fn load_on(&self, level: &Arc<GasketLevel>) -> Result<DiscreteFunction> {
        let have = LevelRef::of(level);
        if have != self.level_ref {
            return Err(Error::LevelMismatch(
                self.level_ref.n,
                self.level_ref.m,
                have.n,
                have.m,
            ));
        }
        DiscreteFunction::new(level.clone(), self.values.clone(), self.zero_boundary)
    }
}

/// One solver result in serialized form, with the problem it solves so that
/// it can be re-verified without any other file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub label: String,
    pub kind: SolutionKind,
    pub problem: ProblemSpec,
    pub energy: f64,
    pub residual: f64,
    pub norm: f64,
    pub sup_norm: f64,
    pub converged: bool,
    pub constrained: bool,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub wall_time: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub trace: Vec<f64>,
    pub u: FunctionRecord,
}

impl SolutionRecord {
    pub fn new(label: &str, problem: &ProblemSpec, report: &SolutionReport, opts: &SolveOptions) -> Self {
        Self {
            label: label.to_string(),
            kind: report.kind,
            problem: *problem,
            energy: report.energy,
            residual: report.residual,
            norm: report.norm,
            sup_norm: report.u.sup_norm(),
            converged: report.converged,
            constrained: report.constrained,
            iterations: report.iterations,
            newton_iterations: report.newton_iterations,
            wall_time: report.wall_time,
            abs_tol: opts.abs_tol,
            rel_tol: opts.rel_tol,
            thresholds: None,
            regime: None,
            trace: report.trace.clone(),
            u: FunctionRecord::from_function(&report.u),
        }
    }
}

/// Serialized [`ThreeSolutions`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThreeSolutionsRecord {
    pub problem: ProblemSpec,
    pub status: PipelineStatus,
    pub thresholds: ThresholdReport,
    pub u_lambda: FunctionRecord,
    pub regime: Regime,
    pub ordering: Option<OrderingCheck>,
    pub ordering_holds: Option<bool>,
    pub all_converged: bool,
    pub sup_distances: Option<[f64; 3]>,
    pub far_scale: Option<f64>,
    pub notes: Vec<String>,
    pub solutions: Vec<SolutionRecord>,
}

/// Labels of the three solutions, in pipeline order.
pub const SOLUTION_LABELS: [&str; 3] = ["u1", "u2", "u3"];

impl ThreeSolutionsRecord {
    pub fn new(run: &ThreeSolutions, opts: &SolveOptions) -> Self {
        let solutions = run
            .reports
            .iter()
            .zip(SOLUTION_LABELS)
            .map(|(r, label)| {
                let mut rec = SolutionRecord::new(label, &run.spec, r, opts);
                rec.thresholds = Some(run.thresholds.clone());
                rec.regime = Some(run.regime);
                rec
            })
            .collect();
        Self {
            problem: run.spec,
            status: run.status,
            thresholds: run.thresholds.clone(),
            u_lambda: FunctionRecord::from_function(&run.u_lambda),
            regime: run.regime,
            ordering: run.ordering,
            ordering_holds: run.ordering.map(|o| o.holds()),
            all_converged: run.all_converged(),
            sup_distances: run.sup_distances,
            far_scale: run.far_scale,
            notes: run.notes.clone(),
            solutions,
        }
    }
}

/// Removes every `wall_time` field, recursively; what remains of a report is
/// a deterministic function of its inputs.
pub fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("wall_time");
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// Result of re-evaluating a stored solution from its values alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub stored_energy: f64,
    pub energy: f64,
    pub stored_residual: f64,
    pub residual: f64,
    pub norm: f64,
    pub energy_matches: bool,
    /// For a report marked converged: the recomputed residual meets the
    /// stored tolerances. Otherwise: it agrees with the stored residual.
    pub residual_ok: bool,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.energy_matches && self.residual_ok
    }
}

/// Recomputes `I` and the gradient norm of a stored solution.
pub fn verify_solution(record: &SolutionRecord) -> Result<Verification> {
    record.problem.validate()?;
    let u = record.u.load()?;
    if record.u.level_ref != (LevelRef { n: record.problem.n, m: record.problem.m }) {
        return precondition("solution level differs from the problem level");
    }
    let ctx = FunctionalContext::new(u.level().clone(), Arc::new(power_problem(&record.problem)));
    let energy = ctx.eval(&u)?;
    let residual = ctx.energy_gradient(&u)?.norm;
    let norm = u.norm();
    let scale = 1.0 + record.energy.abs().max(energy.abs());
    let energy_matches = (energy - record.energy).abs() <= 1e-9 * scale;
    let opts = SolveOptions {
        abs_tol: record.abs_tol,
        rel_tol: record.rel_tol,
        ..SolveOptions::default()
    };
    let residual_ok = if record.converged && !record.constrained {
        opts.converged(residual, norm)
    } else {
        (residual - record.residual).abs() <= 1e-6 * residual.max(record.residual) + record.abs_tol
    };
    Ok(Verification {
        stored_energy: record.energy,
        energy,
        stored_residual: record.residual,
        residual,
        norm,
        energy_matches,
        residual_ok,
    })
}

fn coordinate_headers(n: usize) -> Vec<String> {
    (0..n - 1).map(|k| format!("x{k}")).collect()
}

/// One row per vertex: index, Cartesian coordinates, boundary flag.
pub fn write_vertices_csv(level: &GasketLevel, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["vertex".to_string()];
    header.extend(coordinate_headers(level.n()));
    header.push("boundary".into());
    w.write_record(&header)?;
    for (v, x) in level.cartesian().iter().enumerate() {
        let mut row = vec![v.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.push(u8::from(level.is_boundary(v)).to_string());
        w.write_record(&row)?;
    }
    Ok(w.flush()?)
}

/// One row per edge: endpoint indices followed by both endpoints' coordinates.
pub fn write_edges_csv(level: &GasketLevel, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let coords = coordinate_headers(level.n());
    let mut header = vec!["a".to_string(), "b".to_string()];
    header.extend(coords.iter().map(|c| format!("{c}_a")));
    header.extend(coords.iter().map(|c| format!("{c}_b")));
    w.write_record(&header)?;
    let xs = level.cartesian();
    for &[a, b] in level.edges() {
        let mut row = vec![a.to_string(), b.to_string()];
        row.extend(xs[a].iter().map(f64::to_string));
        row.extend(xs[b].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    Ok(w.flush()?)
}

/// Vertex values with coordinates, for surface plots.
pub fn write_values_csv(u: &DiscreteFunction, out: impl Write) -> Result<()> {
    let level = u.level();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["vertex".to_string()];
    header.extend(coordinate_headers(level.n()));
    header.push("value".into());
    w.write_record(&header)?;
    for (v, x) in level.cartesian().iter().enumerate() {
        let mut row = vec![v.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.push(u.values()[v].to_string());
        w.write_record(&row)?;
    }
    Ok(w.flush()?)
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    label: &'a str,
    kind: SolutionKind,
    energy: f64,
    residual: f64,
    norm: f64,
    sup_norm: f64,
    converged: bool,
    constrained: bool,
    iterations: usize,
    newton_iterations: usize,
}

/// One summary row per solution.
pub fn write_summary_csv(solutions: &[SolutionRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in solutions {
        w.serialize(SummaryRow {
            label: &s.label,
            kind: s.kind,
            energy: s.energy,
            residual: s.residual,
            norm: s.norm,
            sup_norm: s.sup_norm,
            converged: s.converged,
            constrained: s.constrained,
            iterations: s.iterations,
            newton_iterations: s.newton_iterations,
        })?;
    }
    Ok(w.flush()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::minimize;

    #[test]
    fn gasket_record_shape() {
        let g = build_level(3, 1).unwrap();
        let rec = GasketRecord::from_level(&g);
        assert_eq!(rec.vertices.len(), 6);
        assert_eq!(rec.edges.len(), 9);
        assert_eq!(rec.cells.len(), 3);
        assert_eq!(rec.boundary, vec![0, 1, 2]);
        assert_eq!(rec.denominator, 2);
        let json = serde_json::to_value(&rec).unwrap();
        assert_eq!(json["N"], 3);
        assert_eq!(json["vertices"][3], serde_json::json!([1, 1, 0]));
    }

    #[test]
    fn function_round_trip() {
        let level = Arc::new(build_level(3, 2).unwrap());
        let u = DiscreteFunction::from_interior(level.clone(), &(0..12).map(|k| k as f64 * 0.1).collect::<Vec<_>>())
            .unwrap();
        let text = serde_json::to_string(&FunctionRecord::from_function(&u)).unwrap();
        let back: FunctionRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.load().unwrap().values(), u.values());
        let other = Arc::new(build_level(3, 1).unwrap());
        assert!(matches!(back.load_on(&other), Err(Error::LevelMismatch(..))));
    }

    #[test]
    fn zero_solution_verifies() {
        let spec = ProblemSpec::new(3, 2, 1.5, 1.8, 4.0, 0.0, 0.0).unwrap();
        let level = Arc::new(build_level(3, 2).unwrap());
        let ctx = FunctionalContext::new(level, Arc::new(power_problem(&spec)));
        let opts = SolveOptions::default();
        let report = minimize(&ctx, &ctx.zero(), &opts).unwrap();
        let rec = SolutionRecord::new("zero", &spec, &report, &opts);
        let v = verify_solution(&rec).unwrap();
        assert!(v.passed());
        assert_eq!(v.energy, 0.0);
    }

    #[test]
    fn timing_is_stripped_everywhere() {
        let mut v = serde_json::json!({"wall_time": 1.0, "a": [{"wall_time": 2.0, "b": 3}]});
        strip_timing(&mut v);
        assert_eq!(v, serde_json::json!({"a": [{"b": 3}]}));
    }

    #[test]
    fn csv_tables() {
        let level = build_level(3, 1).unwrap();
        let mut buf = Vec::new();
        write_edges_csv(&level, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.starts_with("a,b,x0_a,x1_a,x0_b,x1_b"));
        let mut buf = Vec::new();
        write_vertices_csv(&level, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }
}
