//! Critical point searches for the discrete energy functional: descent to a
//! minimizer, projected descent in a ball, and a path-deformation mountain
//! pass, plus the three-solution pipeline for the concave-convex problem.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::{energy, inner, DiscreteFunction};
use crate::error::{precondition, Error, Result};
use crate::functional::{FunctionalContext, Gradient};
use crate::gasket::build_level;
use crate::nonlinearity::{power_problem, ProblemSpec};
use crate::thresholds::{compute_constants, compute_u_lambda, eta_thresholds, ThresholdReport};

/// Stopping rules and iteration caps shared by all engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Absolute bound on the energy norm of the gradient.
    pub abs_tol: f64,
    /// Bound on the gradient norm relative to the energy norm of the iterate.
    pub rel_tol: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    /// Number of path points for the mountain pass, endpoints included.
    pub path_points: usize,
    pub max_path_iterations: usize,
    /// Finish with Newton steps once the relative residual drops below
    /// `newton_switch` (or the deformation stalls).
    pub newton: bool,
    pub newton_switch: f64,
    pub newton_max_iterations: usize,
    /// Largest number of free vertices for which dense Newton steps are used.
    pub newton_dof_cap: usize,
    /// Outer iterations without progress before a deformation counts as stalled.
    pub stall_window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_iterations: 20_000,
            armijo: 1e-4,
            path_points: 33,
            max_path_iterations: 20_000,
            newton: true,
            newton_switch: 1e-3,
            newton_max_iterations: 60,
            newton_dof_cap: 6_000,
            stall_window: 200,
        }
    }
}

impl SolveOptions {
    pub fn converged(&self, residual: f64, norm: f64) -> bool {
        residual == 0.0 || (residual <= self.abs_tol && residual <= self.rel_tol * norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionKind {
    Minimizer,
    BallMinimizer,
    MountainPass,
}

/// A critical point candidate and how it was obtained.
#[derive(Debug, Clone)]
pub struct SolutionReport {
    pub u: DiscreteFunction,
    /// Value of the functional at `u`.
    pub energy: f64,
    /// Energy norm of the gradient at `u`.
    pub residual: f64,
    /// Energy norm of `u`.
    pub norm: f64,
    pub kind: SolutionKind,
    pub converged: bool,
    /// Ball minimization ended on the sphere; the point is not a free
    /// critical point.
    pub constrained: bool,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub wall_time: f64,
    /// Functional values per outer iteration (mountain pass: path maxima).
    pub trace: Vec<f64>,
}

/// Rounding allowance for comparisons of functional values at `u`.
fn noise_floor(ctx: &FunctionalContext, u: &DiscreteFunction) -> f64 {
    let w = ctx.level().weights();
    let nl = ctx.nonlinearity();
    let pot: f64 = ctx
        .free_vertices()
        .iter()
        .map(|&x| (w[x] * nl.primitive(x, u.values()[x])).abs())
        .sum();
    64.0 * f64::EPSILON * (0.5 * energy(u) + pot)
}

struct Descent {
    u: DiscreteFunction,
    value: f64,
    grad: Gradient,
    step: f64,
    /// Largest energy-norm displacement per step.
    max_move: f64,
}

/// One backtracking step along `-grad`, optionally followed by `project`.
/// Returns `false` when no step length gives sufficient decrease.
fn descend(
    ctx: &FunctionalContext,
    state: &mut Descent,
    opts: &SolveOptions,
    project: &dyn Fn(DiscreteFunction) -> DiscreteFunction,
) -> Result<bool> {
    let noise = noise_floor(ctx, &state.u);
    let mut alpha = state.step.min(state.max_move / state.grad.norm);
    while alpha > 1e-16 {
        let cand = project(state.u.axpy(-alpha, &state.grad.direction));
        let value = ctx.eval_unchecked(&cand);
        // predicted decrease -𝒲(g, cand - u); equals α‖g‖² without projection
        let diff = cand.axpy(-1.0, &state.u);
        let slope = inner(&state.grad.direction, &diff)?;
        if value <= state.value + opts.armijo * slope + noise {
            state.grad = ctx.energy_gradient(&cand)?;
            state.u = cand;
            state.value = value;
            state.step = (2.0 * alpha).min(1.0);
            return Ok(true);
        }
        alpha *= 0.5;
    }
    Ok(false)
}

/// Newton iteration on the weak residual, accepting only steps that reduce
/// the gradient norm. Returns the number of accepted steps.
fn newton_polish(
    ctx: &FunctionalContext,
    u: &mut DiscreteFunction,
    grad: &mut Gradient,
    opts: &SolveOptions,
    accept: &dyn Fn(&DiscreteFunction) -> bool,
) -> Result<usize> {
    if ctx.free_vertices().len() > opts.newton_dof_cap {
        return Ok(0);
    }
    let mut steps = 0;
    for _ in 0..opts.newton_max_iterations {
        if opts.converged(grad.norm, u.norm()) {
            break;
        }
        let h = ctx.hessian(u);
        if h.iter().any(|x| !x.is_finite()) {
            break;
        }
        let r = ctx.residual_unchecked(u);
        let rhs = nalgebra::DVector::from_vec(ctx.free_values(&r));
        let Some(delta) = h.lu().solve(&rhs) else {
            break;
        };
        let delta = ctx.from_free_values(delta.as_slice())?;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-3 {
            let cand = u.axpy(-alpha, &delta);
            if cand.values().iter().all(|x| x.is_finite()) && accept(&cand) {
                let g = ctx.energy_gradient(&cand)?;
                if g.norm < grad.norm {
                    *u = cand;
                    *grad = g;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        steps += 1;
    }
    Ok(steps)
}

/// Descent in the energy metric with backtracking, finished by Newton steps
/// near the minimizer.
pub fn minimize(
    ctx: &FunctionalContext,
    u0: &DiscreteFunction,
    opts: &SolveOptions,
) -> Result<SolutionReport> {
    let started = Instant::now();
    let value = ctx.eval(u0)?;
    let grad = ctx.energy_gradient(u0)?;
    let mut st = Descent {
        u: u0.clone(),
        value,
        grad,
        step: 1.0,
        max_move: f64::INFINITY,
    };
    let mut trace = vec![value];
    let mut iterations = 0;
    let identity = |u: DiscreteFunction| u;
    while iterations < opts.max_iterations {
        let norm = st.u.norm();
        if opts.converged(st.grad.norm, norm) {
            break;
        }
        if opts.newton && st.grad.norm <= opts.newton_switch * norm {
            break;
        }
        if !descend(ctx, &mut st, opts, &identity)? {
            break;
        }
        iterations += 1;
        trace.push(st.value);
    }
    let mut newton_iterations = 0;
    if opts.newton && !opts.converged(st.grad.norm, st.u.norm()) {
        let ceiling = st.value + noise_floor(ctx, &st.u);
        newton_iterations = newton_polish(ctx, &mut st.u, &mut st.grad, opts, &|c| {
            ctx.eval_unchecked(c) <= ceiling
        })?;
        st.value = ctx.eval_unchecked(&st.u);
        trace.push(st.value);
        // resume plain descent if Newton could not finish
        while iterations < opts.max_iterations && !opts.converged(st.grad.norm, st.u.norm()) {
            if !descend(ctx, &mut st, opts, &identity)? {
                break;
            }
            iterations += 1;
            trace.push(st.value);
        }
    }
    let norm = st.u.norm();
    Ok(SolutionReport {
        converged: opts.converged(st.grad.norm, norm),
        energy: st.value,
        residual: st.grad.norm,
        norm,
        u: st.u,
        kind: SolutionKind::Minimizer,
        constrained: false,
        iterations,
        newton_iterations,
        wall_time: started.elapsed().as_secs_f64(),
        trace,
    })
}

/// Projected descent on the closed ball of energy radius `radius`.
pub fn minimize_in_ball(
    ctx: &FunctionalContext,
    radius: f64,
    u0: &DiscreteFunction,
    opts: &SolveOptions,
) -> Result<SolutionReport> {
    if !(radius > 0.0) {
        return precondition(format!("ball radius must be positive, got {radius}"));
    }
    if u0.norm() > radius * (1.0 + 1e-12) {
        return precondition("initial point lies outside the ball");
    }
    let started = Instant::now();
    let project = move |u: DiscreteFunction| {
        let n = u.norm();
        if n > radius {
            u.scaled(radius / n)
        } else {
            u
        }
    };
    let u0 = project(u0.clone());
    let value = ctx.eval(&u0)?;
    let grad = ctx.energy_gradient(&u0)?;
    let mut st = Descent {
        u: u0,
        value,
        grad,
        step: 1.0,
        max_move: f64::INFINITY,
    };
    let mut trace = vec![value];
    let mut iterations = 0;
    let on_sphere = |u: &DiscreteFunction| u.norm() >= radius * (1.0 - 1e-10);
    // tangential part of the gradient on the sphere, and whether -g points out
    let pinned_stationary = |st: &Descent| -> Result<bool> {
        let g = &st.grad.direction;
        let radial = inner(g, &st.u)? / (radius * radius);
        let tangential = g.axpy(-radial, &st.u).norm();
        Ok(radial <= 0.0 && opts.converged(tangential, st.u.norm()))
    };
    let mut newton_iterations = 0;
    while iterations < opts.max_iterations {
        let norm = st.u.norm();
        if on_sphere(&st.u) {
            if pinned_stationary(&st)? {
                break;
            }
        } else {
            if opts.converged(st.grad.norm, norm) {
                break;
            }
            if opts.newton && st.grad.norm <= opts.newton_switch * norm {
                let ceiling = st.value + noise_floor(ctx, &st.u);
                newton_iterations += newton_polish(ctx, &mut st.u, &mut st.grad, opts, &|c| {
                    c.norm() < radius && ctx.eval_unchecked(c) <= ceiling
                })?;
                st.value = ctx.eval_unchecked(&st.u);
                trace.push(st.value);
                if opts.converged(st.grad.norm, st.u.norm()) {
                    break;
                }
            }
        }
        if !descend(ctx, &mut st, opts, &project)? {
            break;
        }
        iterations += 1;
        trace.push(st.value);
    }
    let norm = st.u.norm();
    let constrained = on_sphere(&st.u);
    let converged = if constrained {
        pinned_stationary(&st)?
    } else {
        opts.converged(st.grad.norm, norm)
    };
    Ok(SolutionReport {
        converged,
        energy: st.value,
        residual: st.grad.norm,
        norm,
        u: st.u,
        kind: SolutionKind::BallMinimizer,
        constrained,
        iterations,
        newton_iterations,
        wall_time: started.elapsed().as_secs_f64(),
        trace,
    })
}

/// Discretized path from `0` to `e`: ordered points and their functional
/// values. Endpoints stay fixed.
#[derive(Debug, Clone)]
pub struct PathState {
    points: Vec<DiscreteFunction>,
    values: Vec<f64>,
}

impl PathState {
    /// Straight segment `t e`, `t` equispaced in `[0, 1]`.
    pub fn segment(ctx: &FunctionalContext, e: &DiscreteFunction, count: usize) -> Result<Self> {
        if count < 3 {
            return precondition(format!("a path needs at least 3 points, got {count}"));
        }
        let points: Vec<DiscreteFunction> = (0..count)
            .map(|k| e.scaled(k as f64 / (count - 1) as f64))
            .collect();
        let values = points
            .iter()
            .map(|p| ctx.eval(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points, values })
    }

    pub fn points(&self) -> &[DiscreteFunction] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interior index of the largest value, lowest index on ties.
    pub fn peak(&self) -> usize {
        let mut best = 1;
        for k in 2..self.points.len() - 1 {
            if self.values[k] > self.values[best] {
                best = k;
            }
        }
        best
    }

    fn max_value(&self) -> f64 {
        self.values[self.peak()]
    }

    /// Mean energy-norm distance between consecutive points.
    pub fn spacing(&self) -> f64 {
        let total: f64 = self
            .points
            .windows(2)
            .map(|w| w[1].axpy(-1.0, &w[0]).norm())
            .sum();
        total / (self.points.len() - 1) as f64
    }

    /// Resamples the polyline at equal energy-norm arclength.
    fn equalized(&self, ctx: &FunctionalContext) -> Self {
        let n = self.points.len();
        let mut cum = vec![0.0; n];
        for k in 1..n {
            cum[k] = cum[k - 1] + self.points[k].axpy(-1.0, &self.points[k - 1]).norm();
        }
        let total = cum[n - 1];
        let mut points = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        points.push(self.points[0].clone());
        values.push(self.values[0]);
        let mut seg = 0;
        for j in 1..n - 1 {
            let target = total * j as f64 / (n - 1) as f64;
            while seg + 1 < n - 1 && cum[seg + 1] < target {
                seg += 1;
            }
            let len = cum[seg + 1] - cum[seg];
            let t = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
            let p = self.points[seg].axpy(t, &self.points[seg + 1].axpy(-1.0, &self.points[seg]));
            values.push(ctx.eval_unchecked(&p));
            points.push(p);
        }
        points.push(self.points[n - 1].clone());
        values.push(self.values[n - 1]);
        Self { points, values }
    }
}

/// Profile of `t ↦ I(t e)` used to place the initial path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProfile {
    /// Parameter of the largest sampled value.
    pub peak_t: f64,
    pub peak_value: f64,
    /// First sampled parameter beyond the peak with a negative value, or 1.
    pub cut_t: f64,
}

/// Samples `I(t e)` on a grid that is logarithmic near 0 and uniform on
/// `[0, 1]`, then refines the maximum by golden-section search.
pub fn segment_profile(ctx: &FunctionalContext, e: &DiscreteFunction) -> SegmentProfile {
    let mut ts: Vec<f64> = (0..=600).map(|k| 10f64.powf(-15.0 + 15.0 * k as f64 / 600.0)).collect();
    ts.extend((1..=2000).map(|k| k as f64 / 2000.0));
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup();
    let value = |t: f64| ctx.eval_unchecked(&e.scaled(t));
    let vals: Vec<f64> = ts.iter().map(|&t| value(t)).collect();
    let mut k = 0;
    for j in 1..ts.len() {
        if vals[j] > vals[k] {
            k = j;
        }
    }
    let (mut lo, mut hi) = (
        if k == 0 { 0.0 } else { ts[k - 1] },
        ts.get(k + 1).copied().unwrap_or(1.0),
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if value(a) >= value(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mut peak_t = 0.5 * (lo + hi);
    let mut peak_value = value(peak_t);
    if vals[k] > peak_value {
        peak_t = ts[k];
        peak_value = vals[k];
    }
    let cut_t = ts
        .iter()
        .zip(&vals)
        .find(|(&t, &v)| t > peak_t && v < 0.0)
        .map(|(&t, _)| t)
        .unwrap_or(1.0);
    SegmentProfile {
        peak_t,
        peak_value,
        cut_t,
    }
}

/// Path-deformation mountain pass between `0` and `e`.
///
/// The endpoint is first pulled in to the first negative value of
/// `I(t e)` past the segment maximum, so that the barrier is resolved by the
/// path points regardless of its scale. Each outer iteration moves the
/// highest path point down the energy gradient and re-spaces the path by
/// arclength. Close to the pass
/// the highest point is finished by Newton steps.
pub fn mountain_pass(
    ctx: &FunctionalContext,
    e: &DiscreteFunction,
    path_points: usize,
    opts: &SolveOptions,
) -> Result<SolutionReport> {
    let started = Instant::now();
    let zero = ctx.zero();
    if ctx.eval(&zero)? != 0.0 {
        return precondition("the functional must vanish at 0");
    }
    let end_value = ctx.eval(e)?;
    if e.sup_norm() == 0.0 {
        return precondition("mountain pass endpoint must be nonzero");
    }
    if end_value > 0.0 {
        return precondition(format!("endpoint value {end_value:e} must be nonpositive"));
    }
    let profile = segment_profile(ctx, e);
    if profile.peak_value <= 0.0 {
        return Err(Error::PathCollapse(format!(
            "no positive barrier along the segment (max {:e})",
            profile.peak_value
        )));
    }
    let endpoint = e.scaled(profile.cut_t);
    let mut path = PathState::segment(ctx, &endpoint, path_points)?;
    let mut kappa = path.max_value();
    let mut trace = vec![kappa];
    let mut best_kappa = kappa;
    let mut since_progress = 0;
    let mut iterations = 0;
    let mut step = 1.0;
    let collapsed = |p: &PathState| p.max_value() <= p.values[0].max(p.values[p.values.len() - 1]);
    let (mut u, mut grad) = loop {
        if collapsed(&path) {
            return Err(Error::PathCollapse(format!(
                "path maximum {:e} fell to the endpoint level after {iterations} iterations",
                path.max_value()
            )));
        }
        let k = path.peak();
        let grad = ctx.energy_gradient(&path.points[k])?;
        let norm = path.points[k].norm();
        let stalled = since_progress >= opts.stall_window;
        if opts.converged(grad.norm, norm)
            || (opts.newton && (grad.norm <= opts.newton_switch * norm || stalled))
            || iterations >= opts.max_path_iterations
            || (stalled && !opts.newton)
        {
            break (path.points[k].clone(), grad);
        }
        let mut st = Descent {
            u: path.points[k].clone(),
            value: path.values[k],
            grad,
            step,
            max_move: 0.5 * path.spacing(),
        };
        if !descend(ctx, &mut st, opts, &|u| u)? {
            break (st.u, st.grad);
        }
        step = st.step;
        path.points[k] = st.u;
        path.values[k] = st.value;
        path = path.equalized(ctx);
        iterations += 1;
        kappa = kappa.min(path.max_value());
        trace.push(kappa);
        if kappa < best_kappa - 1e-12 * best_kappa.abs() {
            best_kappa = kappa;
            since_progress = 0;
        } else {
            since_progress += 1;
        }
    };
    let mut newton_iterations = 0;
    if opts.newton && !opts.converged(grad.norm, u.norm()) {
        let anchor = u.clone();
        let reach = 0.5 * anchor.norm();
        newton_iterations = newton_polish(ctx, &mut u, &mut grad, opts, &|c| {
            c.axpy(-1.0, &anchor).norm() <= reach
        })?;
    }
    let value = ctx.eval_unchecked(&u);
    let norm = u.norm();
    Ok(SolutionReport {
        converged: opts.converged(grad.norm, norm),
        energy: value,
        residual: grad.norm,
        norm,
        u,
        kind: SolutionKind::MountainPass,
        constrained: false,
        iterations,
        newton_iterations,
        wall_time: started.elapsed().as_secs_f64(),
        trace,
    })
}

/// Energy ordering `I(ũ1) < 0 ≤ I(ũ2) < m ≤ I(ũ3)`, checked term by term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub first_negative: bool,
    pub second_nonnegative: bool,
    pub second_below_m: bool,
    pub third_at_least_m: bool,
}

impl OrderingCheck {
    pub fn evaluate(energies: [f64; 3], m: f64) -> Self {
        Self {
            first_negative: energies[0] < 0.0,
            second_nonnegative: energies[1] >= 0.0,
            second_below_m: energies[1] < m,
            third_at_least_m: energies[2] >= m,
        }
    }

    pub fn holds(&self) -> bool {
        self.first_negative && self.second_nonnegative && self.second_below_m && self.third_at_least_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    /// `0 < λ < Λ`.
    pub lambda_admissible: bool,
    /// `0 ≤ η < η_λ`.
    pub eta_admissible: bool,
}

impl Regime {
    pub fn in_regime(&self) -> bool {
        self.lambda_admissible && self.eta_admissible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineStatus {
    /// All three searches ran.
    Completed,
    /// `u_λ` vanished (e.g. `λ = 0`); the construction does not apply.
    Inapplicable,
}

/// Output of [`three_solutions`].
#[derive(Debug, Clone)]
pub struct ThreeSolutions {
    pub spec: ProblemSpec,
    pub status: PipelineStatus,
    /// `ũ1` (ball minimizer), `ũ2` (low pass), `ũ3` (high pass).
    pub reports: Vec<SolutionReport>,
    pub thresholds: ThresholdReport,
    /// Minimizer of `ψ_λ` the construction starts from.
    pub u_lambda: DiscreteFunction,
    pub regime: Regime,
    pub ordering: Option<OrderingCheck>,
    /// Sup-norm distances `(ũ1, ũ2)`, `(ũ1, ũ3)`, `(ũ2, ũ3)`.
    pub sup_distances: Option<[f64; 3]>,
    /// Multiplier `t` with `I(t u_λ) < 0` and `t ‖u_λ‖ > R`.
    pub far_scale: Option<f64>,
    pub notes: Vec<String>,
}

impl ThreeSolutions {
    pub fn all_converged(&self) -> bool {
        self.reports.len() == 3 && self.reports.iter().all(|r| r.converged)
    }

    /// In regime, the ordering must hold; a violation falsifies the run.
    pub fn ordering_violated(&self) -> bool {
        self.regime.in_regime() && self.ordering.map(|o| !o.holds()).unwrap_or(false)
    }
}

fn labelled<T>(step: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Step {
        step,
        source: Box::new(e),
    })
}

/// Largest number of doublings tried when searching for the far endpoint.
pub const MAX_DOUBLINGS: u32 = 60;

/// Runs the three-step construction: ball minimization from `u_λ`, a
/// mountain pass from `0` to `u_λ`, and a mountain pass from `0` to a far
/// multiple of `u_λ`.
pub fn three_solutions(spec: &ProblemSpec, opts: &SolveOptions) -> Result<ThreeSolutions> {
    spec.validate()?;
    let level = Arc::new(build_level(spec.n, spec.m)?);
    let constants = compute_constants(spec.n, spec.q, spec.s)?;
    let (u_lambda, diag) = labelled("u_lambda", compute_u_lambda(spec, &level, opts))?;
    let mut thresholds = ThresholdReport::new(constants, spec.lambda, spec.eta, diag);
    let mut notes = Vec::new();
    let regime_lambda = spec.lambda > 0.0 && spec.lambda < constants.big_lambda;
    if thresholds.u_lambda.degenerate {
        notes.push("u_lambda vanished; the three-solution construction does not apply".into());
        return Ok(ThreeSolutions {
            spec: *spec,
            status: PipelineStatus::Inapplicable,
            reports: Vec::new(),
            thresholds,
            u_lambda,
            regime: Regime {
                lambda_admissible: regime_lambda,
                eta_admissible: false,
            },
            ordering: None,
            sup_distances: None,
            far_scale: None,
            notes,
        });
    }
    let etas = labelled("eta_thresholds", eta_thresholds(spec, &u_lambda, &constants))?;
    thresholds.eta_thresholds = Some(etas);
    let regime = Regime {
        lambda_admissible: regime_lambda,
        eta_admissible: spec.eta >= 0.0 && spec.eta < etas.eta_lambda,
    };
    if !regime.in_regime() {
        notes.push("parameters outside the admissible region; ordering is not enforced".into());
    }
    let ctx = FunctionalContext::new(level.clone(), Arc::new(power_problem(spec)));

    // first step: minimize over the closed ball of radius R, starting at u_λ
    let start = if u_lambda.norm() < constants.big_r {
        u_lambda.clone()
    } else {
        notes.push("u_lambda lies outside the ball; started from its radial projection".into());
        u_lambda.scaled(0.5 * constants.big_r / u_lambda.norm())
    };
    let first = labelled("ball-minimum", minimize_in_ball(&ctx, constants.big_r, &start, opts))?;

    // second step: mountain pass between 0 and u_λ
    let second = labelled(
        "low-mountain-pass",
        mountain_pass(&ctx, &u_lambda, opts.path_points, opts),
    )?;

    // third step: far endpoint t u_λ with t ‖u_λ‖ > R and I(t u_λ) < 0
    let norm = u_lambda.norm();
    let mut t = (constants.big_r / norm).max(1.0);
    if t * norm <= constants.big_r {
        t *= 2.0;
    }
    let mut found = None;
    for _ in 0..=MAX_DOUBLINGS {
        let far = u_lambda.scaled(t);
        if far.norm() > constants.big_r && ctx.eval_unchecked(&far) < 0.0 {
            found = Some(far);
            break;
        }
        t *= 2.0;
    }
    let far = labelled(
        "far-endpoint",
        found.ok_or_else(|| {
            Error::Consistency(format!("no far endpoint within {MAX_DOUBLINGS} doublings"))
        }),
    )?;
    let third = labelled(
        "high-mountain-pass",
        mountain_pass(&ctx, &far, opts.path_points, opts),
    )?;

    let energies = [first.energy, second.energy, third.energy];
    let ordering = OrderingCheck::evaluate(energies, constants.m);
    let sup = [
        first.u.sup_distance(&second.u),
        first.u.sup_distance(&third.u),
        second.u.sup_distance(&third.u),
    ];
    Ok(ThreeSolutions {
        spec: *spec,
        status: PipelineStatus::Completed,
        reports: vec![first, second, third],
        thresholds,
        u_lambda,
        regime,
        ordering: Some(ordering),
        sup_distances: Some(sup),
        far_scale: Some(t),
        notes,
    })
}
