use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use serde::Serialize;

use sgvar::critical::{three_solutions, PipelineStatus};
use sgvar::gasket::build_level_capped;
use sgvar::io::{
    verify_solution, write_edges_csv, write_summary_csv, write_values_csv, write_vertices_csv, GasketRecord,
    SolutionRecord, ThreeSolutionsRecord,
};
use sgvar::nonlinearity::{check_c2, example_f1, C2Constants, ProbeGrid};
use sgvar::thresholds::{
    compute_constants, compute_u_lambda, estimate_rho2, eta_thresholds, resolve_parameters, Rho2Options,
};
use sgvar::{Error, GasketLevel};

use crate::config::{read_json, Family, Param, RunConfig};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Precondition = 2,
    NonConvergence = 3,
    Failed = 4,
}

/// Exit status for an error that stopped a command.
pub fn exit_for(err: &anyhow::Error) -> Exit {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) => exit_for_core(e),
        // unreadable or unwritable files
        None => Exit::Precondition,
    }
}

fn exit_for_core(e: &Error) -> Exit {
    match e {
        Error::Step { source, .. } => exit_for_core(source),
        Error::LinearSolve { .. } | Error::Singular(_) | Error::PathCollapse(_) => Exit::NonConvergence,
        Error::Consistency(_) => Exit::Failed,
        _ => Exit::Precondition,
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn write_csv(path: &Path, f: impl FnOnce(BufWriter<File>) -> sgvar::Result<()>) -> anyhow::Result<()> {
    f(create(path)?).with_context(|| format!("writing {}", path.display()))
}

fn output_dir(config: &RunConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&config.output).with_context(|| format!("creating {}", config.output.display()))?;
    Ok(&config.output)
}

fn level(config: &RunConfig) -> anyhow::Result<Arc<GasketLevel>> {
    Ok(Arc::new(build_level_capped(config.n, config.m, config.vertex_cap)?))
}

pub fn build_gasket(config: &RunConfig, out: &mut impl Write) -> anyhow::Result<Exit> {
    let g = level(config)?;
    let dir = output_dir(config)?;
    write_json(&dir.join("gasket.json"), &GasketRecord::from_level(&g))?;
    write_csv(&dir.join("vertices.csv"), |w| write_vertices_csv(&g, w))?;
    write_csv(&dir.join("edges.csv"), |w| write_edges_csv(&g, w))?;
    writeln!(
        out,
        "N={} m={}: {} vertices, {} edges, {} cells -> {}",
        g.n(),
        g.m(),
        g.vertex_count(),
        g.edges().len(),
        g.cell_count(),
        dir.display()
    )?;
    Ok(Exit::Success)
}

/// Two-column `key value` table.
struct Table(Vec<(String, String)>);

impl Table {
    fn row(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn print(&self, out: &mut impl Write) -> std::io::Result<()> {
        let width = self.0.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        for (k, v) in &self.0 {
            writeln!(out, "{k:<width$}  {v}")?;
        }
        Ok(())
    }
}

fn sci(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn thresholds(config: &RunConfig, out: &mut impl Write) -> anyhow::Result<Exit> {
    let mut t = Table(Vec::new());
    t.row("N", config.n);
    t.row("m_level", config.m);
    match &config.nonlinearity {
        Family::Power => power_thresholds(config, &mut t)?,
        family => estimated_threshold(config, family, &mut t)?,
    }
    t.print(out)?;
    Ok(Exit::Success)
}

fn power_thresholds(config: &RunConfig, t: &mut Table) -> anyhow::Result<()> {
    let k = compute_constants(config.n, config.q, config.s)?;
    t.row("r", config.r);
    t.row("s", config.s);
    t.row("q", config.q);
    t.row("c", sci(k.c));
    t.row("R", sci(k.big_r));
    t.row("m", sci(k.m));
    t.row("Lambda", sci(k.big_lambda));
    let Some(lambda) = config.lambda else {
        return Ok(());
    };
    config.check_level_size()?;
    let lambda = lambda.value().unwrap_or(0.5 * k.big_lambda);
    t.row("lambda", sci(lambda));
    t.row("lambda_auto", config.lambda == Some(Param::AUTO));
    t.row("lambda_admissible", lambda > 0.0 && lambda < k.big_lambda);
    let spec = config.spec(lambda, 0.0)?;
    let g = level(config)?;
    let (u, d) = compute_u_lambda(&spec, &g, &config.solver)?;
    t.row("u_lambda.degenerate", d.degenerate);
    t.row("u_lambda.converged", d.converged);
    t.row("u_lambda.residual", sci(d.residual));
    t.row("u_lambda.iterations", d.iterations);
    t.row("u_lambda.norm", sci(d.norm));
    t.row("u_lambda.sup_norm", sci(u.sup_norm()));
    t.row("u_lambda.psi", sci(d.psi));
    t.row("u_lambda.identity_gap", sci(d.identity_gap));
    t.row("u_lambda.norm_bound", sci(d.norm_bound));
    t.row("u_lambda.norm_bound_holds", d.norm_bound_holds);
    if d.degenerate {
        if let Some(Param::Value(eta)) = config.eta {
            t.row("eta", sci(eta));
        }
        return Ok(());
    }
    let e = eta_thresholds(&spec, &u, &k)?;
    t.row("eta1", sci(e.eta1));
    t.row("eta2", sci(e.eta2));
    t.row("eta_lambda", sci(e.eta_lambda));
    if let Some(eta) = config.eta {
        let eta = eta.value().unwrap_or(0.5 * e.eta_lambda);
        t.row("eta", sci(eta));
        t.row("eta_auto", config.eta == Some(Param::AUTO));
        t.row("eta_admissible", eta < e.eta_lambda);
    }
    Ok(())
}

fn estimated_threshold(config: &RunConfig, family: &Family, t: &mut Table) -> anyhow::Result<()> {
    config.check_level_size()?;
    let g = level(config)?;
    // exponents only matter for the power family
    let spec = config.spec(0.0, 0.0)?;
    let nl = family.build(&spec, g.vertex_count())?;
    let t1 = match family {
        Family::CustomExpression { t1, .. } => *t1,
        _ => 1.0,
    };
    t.row("family", nl.describe()["family"].as_str().unwrap_or("custom"));
    t.row("t1", t1);
    let est = estimate_rho2(nl.clone(), t1, &g, &Rho2Options::default())?;
    t.row("witness_ratio", sci(est.witness_ratio));
    t.row("rho2_lower", sci(est.rho2_lower));
    t.row("Lambda_upper", sci(est.lambda_upper));
    t.row("ascent_steps_accepted", est.accepted_steps);
    if let Family::ExampleF1 {
        alpha,
        beta,
        coefficients,
    } = family
    {
        let f1 = example_f1(*alpha, *beta, coefficients.expand(g.vertex_count())?)?;
        let k = C2Constants::for_example_f1(&f1);
        let report = check_c2(&f1, &ProbeGrid::uniform(g.vertex_count(), 4.0, 161), &k);
        t.row("c2.growth", report.growth.passed);
        t.row("c2.near_zero", report.near_zero.passed);
        t.row("c2.sign", report.sign.passed);
    }
    Ok(())
}

pub fn three_solutions_cmd(config: &RunConfig, out: &mut impl Write) -> anyhow::Result<Exit> {
    if config.nonlinearity != Family::Power {
        return Err(Error::Precondition("three-solutions runs the power family only".into()).into());
    }
    config.check_level_size()?;
    let base = config.spec(0.0, 0.0)?;
    let lambda = config.lambda.unwrap_or(Param::AUTO).value();
    let eta = config.eta.unwrap_or(Param::AUTO).value();
    let spec = resolve_parameters(&base, lambda, eta, &config.solver)?;
    let run = three_solutions(&spec, &config.solver)?;
    let record = ThreeSolutionsRecord::new(&run, &config.solver);

    let dir = output_dir(config)?;
    write_json(&dir.join("config.json"), config)?;
    write_json(&dir.join("thresholds.json"), &record.thresholds)?;
    write_csv(&dir.join("u_lambda.csv"), |w| write_values_csv(&run.u_lambda, w))?;
    writeln!(out, "lambda = {:e}, eta = {:e}", spec.lambda, spec.eta)?;
    writeln!(out, "regime: {}", if run.regime.in_regime() { "in" } else { "out" })?;
    for note in &run.notes {
        writeln!(out, "note: {note}")?;
    }
    if run.status == PipelineStatus::Inapplicable {
        write_json(&dir.join("run.json"), &record)?;
        return Ok(Exit::Precondition);
    }
    for (rec, report) in record.solutions.iter().zip(&run.reports) {
        write_json(&dir.join(format!("{}.json", rec.label)), rec)?;
        write_csv(&dir.join(format!("{}.csv", rec.label)), |w| write_values_csv(&report.u, w))?;
        writeln!(
            out,
            "{}: I = {:e}, residual = {:e}, norm = {:e}, converged = {}",
            rec.label, rec.energy, rec.residual, rec.norm, rec.converged
        )?;
    }
    write_csv(&dir.join("summary.csv"), |w| write_summary_csv(&record.solutions, w))?;
    write_json(&dir.join("run.json"), &record)?;

    let line = ordering_line(&record);
    writeln!(out, "{line}")?;
    fs::write(dir.join("ordering.txt"), format!("{line}\n"))
        .with_context(|| format!("writing {}", dir.join("ordering.txt").display()))?;

    Ok(if !run.all_converged() {
        Exit::NonConvergence
    } else if run.ordering_violated() {
        Exit::Failed
    } else {
        Exit::Success
    })
}

fn ordering_line(record: &ThreeSolutionsRecord) -> String {
    let e: Vec<f64> = record.solutions.iter().map(|s| s.energy).collect();
    let verdict = match (record.ordering_holds, record.regime.in_regime()) {
        (Some(true), _) => "holds",
        (Some(false), true) => "VIOLATED",
        (Some(false), false) => "fails (out of regime, not enforced)",
        (None, _) => "n/a",
    };
    format!(
        "ordering: I(u1) = {:e} < 0 <= I(u2) = {:e} < m = {:e} <= I(u3) = {:e}: {verdict}",
        e[0], e[1], record.thresholds.constants.m, e[2]
    )
}

pub fn verify(config: &RunConfig, out: &mut impl Write) -> anyhow::Result<Exit> {
    let Some(path) = &config.solution else {
        return Err(Error::Precondition("verify needs --solution <file>".into()).into());
    };
    let doc = read_json(path)?;
    // a single solution, or a whole run
    let records: Vec<SolutionRecord> = match doc.get("solutions") {
        Some(list) => serde_json::from_value(list.clone()),
        None => serde_json::from_value(doc).map(|r| vec![r]),
    }
    .map_err(|e| Error::Precondition(format!("{} is not a stored solution: {e}", path.display())))?;
    let mut all = true;
    for rec in &records {
        let v = verify_solution(rec)?;
        all &= v.passed();
        writeln!(
            out,
            "{}: I = {:e} (stored {:e}), residual = {:e} (stored {:e}), energy {}, residual {}: {}",
            rec.label,
            v.energy,
            v.stored_energy,
            v.residual,
            v.stored_residual,
            if v.energy_matches { "ok" } else { "MISMATCH" },
            if v.residual_ok { "ok" } else { "FAILED" },
            if v.passed() { "verified" } else { "FAILED" }
        )?;
    }
    Ok(if all { Exit::Success } else { Exit::Failed })
}
