use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use sgvar::energy::{
    embedding_constant, energy, harmonic_extension, inner, lipschitz_compose, power_integral, restrict,
    sup_norm_bound_check,
};
use sgvar::gasket::vertex_count;
use sgvar::nonlinearity::{example_f1, power_problem, ExpressionNonlinearity, Nonlinearity, ProblemSpec};
use sgvar::thresholds::compute_constants;
use sgvar::{build_level, DiscreteFunction, FunctionalContext, GasketLevel};

fn cached(n: usize, m: u32) -> Arc<GasketLevel> {
    static LEVELS: OnceLock<Vec<Arc<GasketLevel>>> = OnceLock::new();
    let all = LEVELS.get_or_init(|| {
        let mut v = Vec::new();
        for n in [3, 4] {
            for m in 0..=4 {
                v.push(Arc::new(build_level(n, m).unwrap()));
            }
        }
        v
    });
    all.iter().find(|g| g.n() == n && g.m() == m).unwrap().clone()
}

fn values(level: &Arc<GasketLevel>, raw: &[f64], zero_boundary: bool) -> DiscreteFunction {
    let vals = (0..level.vertex_count())
        .map(|v| {
            if zero_boundary && level.is_boundary(v) {
                0.0
            } else {
                raw[v % raw.len()] * (1.0 + (v % 7) as f64 * 0.1)
            }
        })
        .collect();
    DiscreteFunction::new(level.clone(), vals, zero_boundary).unwrap()
}

fn raw() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 5..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn restriction_does_not_increase_energy(n in 3usize..5, m in 0u32..4, xs in raw()) {
        let fine = cached(n, m + 1);
        let u = values(&fine, &xs, false);
        let coarse = restrict(&u, &cached(n, m)).unwrap();
        prop_assert!(energy(&coarse) <= energy(&u) * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn harmonic_extension_is_optimal(n in 3usize..5, m in 0u32..4, xs in raw(), bump in -1.0..1.0f64, pick in 0usize..1000) {
        let (coarse, fine) = (cached(n, m), cached(n, m + 1));
        let u = values(&coarse, &xs, false);
        let ext = harmonic_extension(&u, &fine).unwrap();
        let w = energy(&u);
        prop_assert!((energy(&ext) - w).abs() <= 1e-10 * (1.0 + w));
        // moving any new vertex raises the energy
        let v = coarse.vertex_count() + pick % (fine.vertex_count() - coarse.vertex_count());
        let mut other = ext.clone();
        other.values_mut()[v] += bump;
        prop_assert!(energy(&other) >= energy(&ext) - 1e-12 * (1.0 + w));
        let back = restrict(&ext, &coarse).unwrap();
        prop_assert_eq!(back.values(), u.values());
    }

    #[test]
    fn cauchy_schwarz(m in 0u32..4, xs in raw(), ys in raw()) {
        let g = cached(3, m);
        let (u, v) = (values(&g, &xs, false), values(&g, &ys, false));
        let uv = inner(&u, &v).unwrap();
        prop_assert!(uv * uv <= energy(&u) * energy(&v) * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn embedding_bound(n in 3usize..5, m in 1u32..5, xs in raw()) {
        let u = values(&cached(n, m), &xs, true);
        let check = sup_norm_bound_check(&u);
        prop_assert!(check.holds);
        prop_assert_eq!(check.bound, embedding_constant(n) * energy(&u).sqrt());
    }

    #[test]
    fn lipschitz_maps_contract_energy(m in 1u32..4, xs in raw(), a in -3.0..3.0f64, b in -3.0..3.0f64, k in -1.0..1.0f64) {
        // slope a below k, slope b above, shifted so h(0) = 0
        let raw = move |t: f64| if t < k { a * t } else { a * k + b * (t - k) };
        let h0 = raw(0.0);
        let h = move |t: f64| raw(t) - h0;
        let u = values(&cached(3, m), &xs, true);
        let lip = a.abs().max(b.abs());
        let hu = lipschitz_compose(h, &u).unwrap();
        prop_assert!(energy(&hu) <= lip * lip * energy(&u) + 1e-12);
    }

    #[test]
    fn level_counts_and_degrees(n in 2usize..6, m in 0u32..4) {
        let g = build_level(n, m).unwrap();
        prop_assert_eq!(g.vertex_count() as u128, vertex_count(n, m));
        prop_assert_eq!(g.cell_count(), n.pow(m));
        prop_assert_eq!(g.edges().len(), n.pow(m) * n * (n - 1) / 2);
        for (v, &deg) in g.degrees().iter().enumerate() {
            let want = if g.is_boundary(v) { n - 1 } else { 2 * (n - 1) };
            prop_assert_eq!(deg, want);
        }
    }

    #[test]
    fn constants_identity(n in 2usize..12, q in 2.05..9.0f64, s in 1.05..1.95f64) {
        let k = compute_constants(n, q, s).unwrap();
        let lhs = k.c.powf(q) * k.big_r.powf(q);
        prop_assert!((lhs - k.big_r.powi(2)).abs() <= 1e-14 * k.big_r.powi(2));
        prop_assert!(k.big_lambda > 0.0 && k.m > 0.0);
    }
}

#[test]
fn edges_are_exactly_the_cell_sharing_pairs() {
    for (n, m) in [(3, 0), (3, 1), (3, 2), (3, 3), (4, 2), (5, 1)] {
        let g = build_level(n, m).unwrap();
        let mut edges: Vec<[usize; 2]> = g
            .edges()
            .iter()
            .map(|&[a, b]| if a < b { [a, b] } else { [b, a] })
            .collect();
        edges.sort_unstable();
        let cells: Vec<Vec<usize>> = g.cells().map(<[usize]>::to_vec).collect();
        let mut brute = Vec::new();
        for a in 0..g.vertex_count() {
            for b in a + 1..g.vertex_count() {
                if cells.iter().any(|c| c.contains(&a) && c.contains(&b)) {
                    assert!(g.at_unit_distance(a, b));
                    brute.push([a, b]);
                }
            }
        }
        assert_eq!(edges, brute, "N={n}, m={m}");
    }
}

#[test]
fn unit_distance_alone_over_counts() {
    // midpoints of two sides of the central hole are 2^-m apart but not neighbours
    let g = build_level(3, 2).unwrap();
    let find = |x: [u64; 3]| (0..g.vertex_count()).find(|&v| g.vertex(v) == x).unwrap();
    let (a, b) = (find([2, 1, 1]), find([1, 2, 1]));
    assert!(g.at_unit_distance(a, b));
    assert!(!g.edges().iter().any(|e| e.contains(&a) && e.contains(&b)));
}

#[test]
fn nested_numbering() {
    let fine = build_level(3, 4).unwrap();
    for m in 0..4 {
        let coarse = build_level(3, m).unwrap();
        for v in 0..coarse.vertex_count() {
            let scaled: Vec<u64> = coarse.vertex(v).iter().map(|k| k << (4 - m)).collect();
            assert_eq!(fine.vertex(v), scaled.as_slice());
        }
    }
}

fn smooth_point(level: &Arc<GasketLevel>, seed: u64) -> DiscreteFunction {
    // |u| in [0.3, 0.7] ∪ [1.3, 1.7], away from the kinks of the families below
    let mut x = seed;
    let vals = (0..level.vertex_count())
        .map(|v| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let r = (x >> 11) as f64 / (1u64 << 53) as f64;
            let a = 0.3 + 0.4 * r + if x & 2 == 0 { 1.0 } else { 0.0 };
            if level.is_boundary(v) {
                0.0
            } else if x & 4 == 0 {
                a
            } else {
                -a
            }
        })
        .collect();
    DiscreteFunction::new(level.clone(), vals, true).unwrap()
}

fn families(level: &Arc<GasketLevel>) -> Vec<Arc<dyn Nonlinearity>> {
    let spec = ProblemSpec::new(3, level.m(), 1.5, 1.8, 4.0, 0.7, 0.2).unwrap();
    vec![
        Arc::new(power_problem(&spec)),
        Arc::new(example_f1(1.0, 4.0, vec![1.0; level.vertex_count()]).unwrap()),
        Arc::new(ExpressionNonlinearity::new("a * tanh(t) + spow(t, 3.5)", None, vec![0.5; level.vertex_count()]).unwrap()),
    ]
}

#[test]
fn primitive_and_f_agree() {
    let level = cached(3, 2);
    for nl in families(&level) {
        for k in 1..40 {
            let t = -2.0 + 0.1 * k as f64 + 0.013;
            if (t.abs() - 1.0).abs() < 1e-3 {
                continue;
            }
            let h = 1e-6;
            let fd = (nl.primitive(3, t + h) - nl.primitive(3, t - h)) / (2.0 * h);
            let f = nl.f(3, t);
            assert!((fd - f).abs() <= 1e-6 * f.abs().max(1.0), "{} at {t}: {fd} vs {f}", nl.describe());
            let fd2 = (nl.f(3, t + h) - nl.f(3, t - h)) / (2.0 * h);
            let d = nl.derivative(3, t);
            assert!((fd2 - d).abs() <= 1e-5 * d.abs().max(1.0), "{} at {t}", nl.describe());
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let level = cached(3, 3);
    for (k, nl) in families(&level).into_iter().enumerate() {
        let ctx = FunctionalContext::new(level.clone(), nl);
        let u = smooth_point(&level, 7 + k as u64);
        let r = ctx.weak_residual(&u).unwrap();
        for d in 0..20 {
            let phi = smooth_point(&level, 1000 + d).scaled(0.5);
            let h = 1e-6;
            let fd = (ctx.eval(&u.axpy(h, &phi)).unwrap() - ctx.eval(&u.axpy(-h, &phi)).unwrap()) / (2.0 * h);
            let an: f64 = r.values().iter().zip(phi.values()).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "family {k}: {fd} vs {an}");
        }
    }
}

#[test]
fn gradient_norm_identity_and_descent() {
    let level = cached(3, 3);
    for nl in families(&level) {
        let ctx = FunctionalContext::new(level.clone(), nl);
        let u = smooth_point(&level, 99);
        let r = ctx.weak_residual(&u).unwrap();
        let g = ctx.energy_gradient(&u).unwrap();
        // 𝒲(g, g) = Σ r g
        let rg: f64 = r.values().iter().zip(g.direction.values()).map(|(a, b)| a * b).sum();
        let gg = energy(&g.direction);
        assert!((gg - rg).abs() <= 1e-8 * gg);
        assert!((g.norm - gg.sqrt()).abs() <= 1e-8 * g.norm);
        // a short step along -g lowers I
        let i0 = ctx.eval(&u).unwrap();
        let step = 1e-4 / g.norm.max(1.0);
        assert!(ctx.eval(&u.axpy(-step, &g.direction)).unwrap() < i0);
    }
}

#[test]
fn positive_near_zero_without_sublinear_terms() {
    let level = cached(3, 3);
    let spec = ProblemSpec::new(3, 3, 1.5, 1.8, 4.0, 0.0, 0.0).unwrap();
    let ctx = FunctionalContext::new(level.clone(), Arc::new(power_problem(&spec)));
    let c = embedding_constant(3);
    for seed in 0..30 {
        let v = smooth_point(&level, seed);
        for rho in [1e-4, 1e-3, 1e-2] {
            let u = v.scaled(rho / v.norm());
            let lower = (0.5 - c.powf(spec.q) * rho.powf(spec.q - 2.0) / spec.q) * rho * rho;
            let i = ctx.eval(&u).unwrap();
            assert!(i >= lower && i > 0.0, "rho={rho}: {i} < {lower}");
        }
    }
}

#[test]
fn positive_near_zero_with_perturbation() {
    // the η-term dominates the λ-term for tiny amplitudes
    let level = cached(3, 3);
    let spec = ProblemSpec::new(3, 3, 1.5, 1.8, 4.0, 1e-3, 1e-3).unwrap();
    let ctx = FunctionalContext::new(level.clone(), Arc::new(power_problem(&spec)));
    for seed in 0..30 {
        let v = smooth_point(&level, seed);
        let u = v.scaled(1e-14 / v.sup_norm());
        assert!(ctx.eval(&u).unwrap() > 0.0);
    }
}

#[test]
fn power_integral_scales_homogeneously() {
    let level = cached(3, 3);
    let u = smooth_point(&level, 5);
    for p in [1.5, 2.0, 4.0] {
        let a = power_integral(&u.scaled(3.0), p);
        assert!((a - 3f64.powf(p) * power_integral(&u, p)).abs() <= 1e-12 * a);
    }
}
