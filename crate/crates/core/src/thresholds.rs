//! Explicit constants of the three-solution construction and a lower-bound
//! estimator for the supremum of `J/Φ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::critical::{minimize, SolveOptions};
use crate::energy::{
    embedding_constant, energy, harmonic_extension, lipschitz_compose, power_integral,
    DiscreteFunction,
};
use crate::error::{precondition, Error, Result};
use crate::functional::FunctionalContext;
use crate::gasket::{build_level, GasketLevel};
use crate::nonlinearity::{sublinear_part, Nonlinearity, ProblemSpec};

/// `c`, `R`, `m` and `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConstants {
    pub c: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub m: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

/// `c = 2N+3`, `R = c^(-q/(q-2))`, `m = ½(½ - 1/q)R²` and
/// `Λ = min(m s / (c R)^s, R^(2-s) / c^s)`.
pub fn compute_constants(n: usize, q: f64, s: f64) -> Result<ThresholdConstants> {
    if n < 2 {
        return precondition(format!("N must be at least 2, got {n}"));
    }
    if !(q > 2.0) || !(1.0 < s && s < 2.0) {
        return precondition(format!("need q > 2 and 1 < s < 2, got q={q}, s={s}"));
    }
    let c = embedding_constant(n);
    let big_r = c.powf(-q / (q - 2.0));
    let lhs = c.powf(q) * big_r.powf(q);
    let rhs = big_r * big_r;
    if ((lhs - rhs) / rhs).abs() > 1e-14 {
        return Err(Error::Consistency(format!(
            "c^q R^q = {lhs:e} differs from R^2 = {rhs:e}"
        )));
    }
    let m = 0.5 * (0.5 - 1.0 / q) * big_r * big_r;
    let cs = c.powf(s);
    let big_lambda = (m * s / (cs * big_r.powf(s))).min(big_r.powf(2.0 - s) / cs);
    Ok(ThresholdConstants {
        c,
        big_r,
        m,
        big_lambda,
    })
}

/// Diagnostics of the `ψ_λ` minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ULambdaDiagnostics {
    pub lambda: f64,
    /// `u_λ` vanished: `λ = 0` or the descent fell into the zero minimizer.
    pub degenerate: bool,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub norm: f64,
    /// `ψ_λ(u_λ)`.
    pub psi: f64,
    /// `|‖u‖² - λ∫|u|^s| / ‖u‖²`.
    pub identity_gap: f64,
    /// `(λ c^s)^(1/(2-s))`.
    pub norm_bound: f64,
    pub norm_bound_holds: bool,
    /// Multiplier applied to the harmonic bump to get the initial point.
    pub seed_scale: f64,
}

/// Level-1 function equal to 1 on `V_1 \ V_0`, extended harmonically to the
/// level of `target`.
pub fn harmonic_bump(target: &Arc<GasketLevel>) -> Result<DiscreteFunction> {
    let (n, m) = (target.n(), target.m());
    if m == 0 {
        return precondition("level 0 has no interior vertices");
    }
    let first = if m == 1 {
        target.clone()
    } else {
        Arc::new(build_level(n, 1)?)
    };
    let mut values = vec![1.0; first.vertex_count()];
    values[..n].fill(0.0);
    let mut u = DiscreteFunction::new(first, values, true)?;
    for k in 2..=m {
        let fine = if k == m {
            target.clone()
        } else {
            Arc::new(build_level(n, k)?)
        };
        u = harmonic_extension(&u, &fine)?;
    }
    Ok(u)
}

/// Minimizes `ψ_λ(u) = ½‖u‖² - (λ/s)∫|u|^s` from a scaled harmonic bump.
pub fn compute_u_lambda(
    spec: &ProblemSpec,
    level: &Arc<GasketLevel>,
    opts: &SolveOptions,
) -> Result<(DiscreteFunction, ULambdaDiagnostics)> {
    spec.validate()?;
    let c = embedding_constant(spec.n);
    let norm_bound = (spec.lambda * c.powf(spec.s)).powf(1.0 / (2.0 - spec.s));
    if spec.lambda == 0.0 {
        let z = DiscreteFunction::zeros(level.clone());
        return Ok((
            z,
            ULambdaDiagnostics {
                lambda: 0.0,
                degenerate: true,
                converged: true,
                residual: 0.0,
                iterations: 0,
                norm: 0.0,
                psi: 0.0,
                identity_gap: 0.0,
                norm_bound,
                norm_bound_holds: true,
                seed_scale: 0.0,
            },
        ));
    }
    let bump = harmonic_bump(level)?;
    // ψ_λ(t v) < 0 once t^(2-s) < 2λ ∫|v|^s / (s ‖v‖²); take half of that
    let limit = 2.0 * spec.lambda * power_integral(&bump, spec.s) / (spec.s * energy(&bump));
    let seed_scale = (0.5 * limit).powf(1.0 / (2.0 - spec.s));
    let ctx = FunctionalContext::new(level.clone(), Arc::new(sublinear_part(spec)));
    let report = minimize(&ctx, &bump.scaled(seed_scale), opts)?;
    let u = report.u;
    let norm_sq = energy(&u);
    let norm = norm_sq.sqrt();
    let degenerate = u.sup_norm() == 0.0 || !(report.energy < 0.0);
    let identity_gap = if norm_sq > 0.0 {
        (norm_sq - spec.lambda * power_integral(&u, spec.s)).abs() / norm_sq
    } else {
        0.0
    };
    let diag = ULambdaDiagnostics {
        lambda: spec.lambda,
        degenerate,
        converged: report.converged,
        residual: report.residual,
        iterations: report.iterations + report.newton_iterations,
        norm,
        psi: report.energy,
        identity_gap,
        norm_bound,
        norm_bound_holds: norm <= norm_bound,
        seed_scale,
    };
    Ok((u, diag))
}

/// `η_{1,λ}`, `η_{2,λ}` and their minimum, with the integrals they use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaThresholds {
    pub eta1: f64,
    pub eta2: f64,
    pub eta_lambda: f64,
    pub norm_sq: f64,
    pub integral_r: f64,
    pub integral_q: f64,
}

pub fn eta_thresholds(
    spec: &ProblemSpec,
    u_lambda: &DiscreteFunction,
    constants: &ThresholdConstants,
) -> Result<EtaThresholds> {
    if u_lambda.sup_norm() == 0.0 {
        return precondition("u_lambda must be nonzero");
    }
    let norm_sq = energy(u_lambda);
    let integral_r = power_integral(u_lambda, spec.r);
    let integral_q = power_integral(u_lambda, spec.q);
    if !(integral_r > 0.0) {
        return Err(Error::Consistency(
            "integral of |u_lambda|^r vanished for a nonzero function".into(),
        ));
    }
    let eta1 = spec.r * (norm_sq * (1.0 / spec.s - 0.5) + integral_q / spec.q) / integral_r;
    let eta2 = constants.m * spec.r / integral_r;
    Ok(EtaThresholds {
        eta1,
        eta2,
        eta_lambda: eta1.min(eta2),
        norm_sq,
        integral_r,
        integral_q,
    })
}

/// Fills in `"auto"` parameters: `λ = Λ/2` when `lambda` is `None`, then
/// `η = η_λ/2` when `eta` is `None`. Only the level and exponents of `base`
/// are used.
pub fn resolve_parameters(
    base: &ProblemSpec,
    lambda: Option<f64>,
    eta: Option<f64>,
    opts: &SolveOptions,
) -> Result<ProblemSpec> {
    let constants = compute_constants(base.n, base.q, base.s)?;
    let lambda = lambda.unwrap_or(0.5 * constants.big_lambda);
    let spec = base.with_parameters(lambda, eta.unwrap_or(0.0));
    spec.validate()?;
    if eta.is_some() {
        return Ok(spec);
    }
    let level = Arc::new(build_level(spec.n, spec.m)?);
    let (u, diag) = compute_u_lambda(&spec, &level, opts)?;
    if diag.degenerate {
        return precondition("eta = auto needs a nonzero u_lambda (lambda > 0)");
    }
    let etas = eta_thresholds(&spec, &u, &constants)?;
    Ok(spec.with_parameters(lambda, 0.5 * etas.eta_lambda))
}

/// Every constant in force for one `(λ, η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(flatten)]
    pub constants: ThresholdConstants,
    pub lambda: f64,
    pub eta: f64,
    pub u_lambda: ULambdaDiagnostics,
    pub eta_thresholds: Option<EtaThresholds>,
}

impl ThresholdReport {
    pub fn new(constants: ThresholdConstants, lambda: f64, eta: f64, u_lambda: ULambdaDiagnostics) -> Self {
        Self {
            constants,
            lambda,
            eta,
            u_lambda,
            eta_thresholds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rho2Options {
    /// Normalized ascent steps on `J/Φ` after the witness.
    pub ascent_steps: usize,
    /// Initial step, relative to the current energy norm.
    pub step: f64,
}

impl Default for Rho2Options {
    fn default() -> Self {
        Self {
            ascent_steps: 50,
            step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rho2Estimate {
    /// Best `J/Φ` found; a lower bound for the supremum.
    pub rho2_lower: f64,
    /// `1 / rho2_lower`, an upper bound for the threshold `Λ`.
    pub lambda_upper: f64,
    /// `J(u_1)/Φ(u_1)` of the truncated witness alone.
    pub witness_ratio: f64,
    /// Truncated witness `u_1 = min(u, t_1)`.
    pub witness: DiscreteFunction,
    /// Function attaining `rho2_lower`.
    pub best: DiscreteFunction,
    pub accepted_steps: usize,
}

/// `Φ(u) = ½‖u‖²` and `J(u) = ∫F(x, u) dμ` with vertex quadrature.
fn ratio(ctx: &FunctionalContext, u: &DiscreteFunction) -> (f64, f64) {
    (ctx.potential(u), 0.5 * energy(u))
}

/// Lower bound for `sup J/Φ` over `Φ > 0`: a nonnegative bump above `t_1`,
/// truncated at `t_1`, then improved by normalized ascent on `J/Φ`.
pub fn estimate_rho2(
    nl: Arc<dyn Nonlinearity>,
    t1: f64,
    level: &Arc<GasketLevel>,
    opts: &Rho2Options,
) -> Result<Rho2Estimate> {
    if t1 == 0.0 || !t1.is_finite() {
        return precondition("t1 must be a nonzero real");
    }
    let ctx = FunctionalContext::new(level.clone(), nl.clone());
    // bump equals 1 on V_1 \ V_0, so 2 t1 * bump passes t1 there
    let u = harmonic_bump(level)?.scaled(2.0 * t1);
    if !u.values().iter().any(|&x| x.abs() > t1.abs()) {
        return Err(Error::Consistency("witness bump does not pass t1".into()));
    }
    let witness = if t1 > 0.0 {
        lipschitz_compose(|t| t.min(t1), &u)?
    } else {
        lipschitz_compose(|t| t.max(t1), &u)?
    };
    let (j, phi) = ratio(&ctx, &witness);
    let witness_ratio = j / phi;
    if !(witness_ratio > 0.0) {
        return Err(Error::Consistency(format!(
            "truncated witness has J/Φ = {witness_ratio:e}; the sign condition on F fails at t1"
        )));
    }

    let w = level.weights();
    let mut best = witness.clone();
    let mut rho = witness_ratio;
    let mut step = opts.step;
    let mut accepted_steps = 0;
    for _ in 0..opts.ascent_steps {
        let (j, phi) = ratio(&ctx, &best);
        // energy-metric gradients: J' ↦ K(u) with 𝒲(K, φ_x) = w f(x,u), Φ' ↦ u
        let rhs: Vec<f64> = ctx
            .free_vertices()
            .iter()
            .map(|&x| w[x] * nl.f(x, best.values()[x]))
            .collect();
        let (k, _) = ctx.solve_stiffness(&rhs)?;
        let k = ctx.from_free_values(&k)?;
        let dir = k.axpy(-j / phi, &best);
        let dnorm = dir.norm();
        if !(dnorm > 0.0) {
            break;
        }
        let unorm = best.norm();
        let mut improved = false;
        let mut tau = step;
        for _ in 0..30 {
            let cand = best.axpy(tau * unorm / dnorm, &dir);
            let (jc, pc) = ratio(&ctx, &cand);
            // stay away from Φ = 0, where the ratio is undefined
            if pc > 1e-12 * phi && jc / pc > rho {
                best = cand;
                rho = jc / pc;
                improved = true;
                break;
            }
            tau *= 0.5;
        }
        if !improved {
            break;
        }
        accepted_steps += 1;
        step = (2.0 * tau).min(1.0);
    }
    Ok(Rho2Estimate {
        rho2_lower: rho,
        lambda_upper: 1.0 / rho,
        witness_ratio,
        witness,
        best,
        accepted_steps,
    })
}
