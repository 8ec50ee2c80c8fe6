//! Run configuration: one JSON document, with command-line flags layered on
//! top of the file keys.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use sgvar::gasket::DEFAULT_VERTEX_CAP;
use sgvar::nonlinearity::{example_f1, power_problem, ExpressionNonlinearity, Nonlinearity};
use sgvar::{Error, ProblemSpec, SolveOptions};

/// A number, or `"auto"` to take the threshold-derived default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Param {
    pub const AUTO: Param = Param::Auto(AutoTag::Auto);

    pub fn value(self) -> Option<f64> {
        match self {
            Param::Value(x) => Some(x),
            Param::Auto(_) => None,
        }
    }

    fn parse(text: &str) -> anyhow::Result<Self> {
        if text.eq_ignore_ascii_case("auto") {
            return Ok(Self::AUTO);
        }
        Ok(Param::Value(text.parse().with_context(|| format!("`{text}` is neither a number nor \"auto\""))?))
    }
}

/// Per-vertex coefficients: one value for every vertex, or an explicit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Constant(f64),
    Table(Vec<f64>),
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients::Constant(1.0)
    }
}

impl Coefficients {
    pub fn expand(&self, vertex_count: usize) -> sgvar::Result<Vec<f64>> {
        match self {
            Coefficients::Constant(a) => Ok(vec![*a; vertex_count]),
            Coefficients::Table(t) if t.len() == vertex_count => Ok(t.clone()),
            Coefficients::Table(t) => Err(Error::Precondition(format!(
                "coefficient table has {} entries, the level has {vertex_count} vertices",
                t.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    #[default]
    Power,
    #[serde(rename = "example_f1")]
    ExampleF1 {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        coefficients: Coefficients,
    },
    CustomExpression {
        f: String,
        #[serde(default)]
        primitive: Option<String>,
        #[serde(default)]
        coefficients: Coefficients,
        /// Level where `F(x, t_1) > 0`, for the Λ estimate.
        #[serde(default = "one")]
        t1: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Family {
    pub fn build(&self, spec: &ProblemSpec, vertex_count: usize) -> sgvar::Result<Arc<dyn Nonlinearity>> {
        Ok(match self {
            Family::Power => Arc::new(power_problem(spec)),
            Family::ExampleF1 {
                alpha,
                beta,
                coefficients,
            } => Arc::new(example_f1(*alpha, *beta, coefficients.expand(vertex_count)?)?),
            Family::CustomExpression {
                f,
                primitive,
                coefficients,
                ..
            } => Arc::new(ExpressionNonlinearity::new(
                f,
                primitive.as_deref(),
                coefficients.expand(vertex_count)?,
            )?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    BuildGasket,
    Thresholds,
    ThreeSolutions,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub lambda: Option<Param>,
    #[serde(default)]
    pub eta: Option<Param>,
    #[serde(default)]
    pub nonlinearity: Family,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default = "default_cap")]
    pub vertex_cap: usize,
    /// Directory receiving every output file.
    #[serde(default = "default_out")]
    pub output: PathBuf,
    /// Stored solution checked by `verify`.
    #[serde(default)]
    pub solution: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    3
}
fn default_m() -> u32 {
    4
}
fn default_r() -> f64 {
    1.5
}
fn default_s() -> f64 {
    1.8
}
fn default_q() -> f64 {
    4.0
}
fn default_cap() -> usize {
    DEFAULT_VERTEX_CAP
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Flag values that replace the matching file keys.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// JSON configuration file; flags override its keys.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long = "N", visible_alias = "n")]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// A number or "auto" (Λ/2).
    #[arg(long)]
    pub lambda: Option<String>,
    /// A number or "auto" (η_λ/2).
    #[arg(long)]
    pub eta: Option<String>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub vertex_cap: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Stored solution to verify.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Reads the file named by `--config` (if any), applies the flags and
    /// validates the result.
    pub fn load(command: Command, flags: &Overrides) -> anyhow::Result<Self> {
        let mut doc = match &flags.config {
            Some(path) => read_json(path)?,
            None => Value::Object(Map::new()),
        };
        let Value::Object(map) = &mut doc else {
            bail!(Error::Precondition("configuration must be a JSON object".into()));
        };
        if let Some(Value::String(c)) = map.get("command") {
            let wanted = serde_json::to_value(command)?;
            if Value::String(c.clone()) != wanted {
                bail!(Error::Precondition(format!(
                    "configuration is for `{c}`, but `{}` was requested",
                    wanted.as_str().unwrap_or_default()
                )));
            }
        }
        map.insert("command".into(), serde_json::to_value(command)?);
        let mut set = |key: &str, v: Value| {
            map.insert(key.into(), v);
        };
        if let Some(n) = flags.n {
            set("N", n.into());
        }
        if let Some(m) = flags.m {
            set("m", m.into());
        }
        for (key, v) in [("r", flags.r), ("s", flags.s), ("q", flags.q)] {
            if let Some(v) = v {
                set(key, v.into());
            }
        }
        for (key, v) in [("lambda", &flags.lambda), ("eta", &flags.eta)] {
            if let Some(text) = v {
                set(key, serde_json::to_value(Param::parse(text).map_err(precondition)?)?);
            }
        }
        if let Some(cap) = flags.vertex_cap {
            set("vertex_cap", cap.into());
        }
        if let Some(out) = &flags.output {
            set("output", out.to_string_lossy().into_owned().into());
        }
        if let Some(path) = &flags.solution {
            set("solution", path.to_string_lossy().into_owned().into());
        }
        if let Some(seed) = flags.seed {
            set("seed", seed.into());
        }
        let solver = map.entry("solver").or_insert_with(|| Value::Object(Map::new()));
        let Value::Object(solver) = solver else {
            bail!(Error::Precondition("`solver` must be a JSON object".into()));
        };
        if let Some(t) = flags.abs_tol {
            solver.insert("abs_tol".into(), t.into());
        }
        if let Some(t) = flags.rel_tol {
            solver.insert("rel_tol".into(), t.into());
        }
        if let Some(k) = flags.max_iterations {
            solver.insert("max_iterations".into(), k.into());
        }
        let config: RunConfig = serde_json::from_value(doc)
            .map_err(|e| Error::Precondition(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> sgvar::Result<()> {
        if self.n < 2 {
            return Err(Error::Precondition(format!("N must be at least 2, got {}", self.n)));
        }
        let o = &self.solver;
        if !(o.abs_tol > 0.0 && o.rel_tol > 0.0) {
            return Err(Error::Precondition("solver tolerances must be positive".into()));
        }
        if o.path_points < 3 {
            return Err(Error::Precondition("a path needs at least 3 points".into()));
        }
        for (name, p) in [("lambda", self.lambda), ("eta", self.eta)] {
            if let Some(Param::Value(x)) = p {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::Precondition(format!("{name} must be a nonnegative number, got {x}")));
                }
            }
        }
        Ok(())
    }

    /// Problem with the given parameters; `λ` and `η` are filled in later.
    pub fn spec(&self, lambda: f64, eta: f64) -> sgvar::Result<ProblemSpec> {
        ProblemSpec::new(self.n, self.m, self.r, self.s, self.q, lambda, eta)
    }

    pub fn check_level_size(&self) -> sgvar::Result<()> {
        let count = sgvar::gasket::vertex_count(self.n, self.m);
        if count > self.vertex_cap as u128 {
            return Err(Error::ResourceCap {
                n: self.n,
                m: self.m,
                vertices: count,
                cap: self.vertex_cap,
            });
        }
        Ok(())
    }
}

fn precondition(e: anyhow::Error) -> Error {
    Error::Precondition(format!("{e:#}"))
}

pub fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
