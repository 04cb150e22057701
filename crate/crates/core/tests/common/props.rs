//! Seeded property suites shared by the `properties` and `acceptance` targets.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use vqcs_core::coherent::{
    evolve, evolve_final, g_transform, project, AngleSchedule, CircuitAmplitude, Gate, GateKind,
    GateSequence, InitialState, ProjectiveAmplitude,
};
use vqcs_core::experiments::{self, CollapseSide, Curves};
use vqcs_core::fredholm::{fredholm_det, magnetization_z, pv_integral, QuadratureGrid};
use vqcs_core::model::{
    bogoliubov_half_angle, dispersion, ground_energy_density_inf, Field, MomentumGrid,
};
use vqcs_core::observables::{
    energy_and_gradient, energy_density, magnetization_x, magnetization_x_finite,
};
use vqcs_core::optimizer::{self, bfgs, light_cone_sites, pad_schedule, BfgsOptions};
use vqcs_core::oracle::{self, Observable};

/// 100 cases from a fixed seed, no regression files.
fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 100,
        rng_seed: RngSeed::Fixed(0x5eed_cafe),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn field(h: f64) -> Field {
    Field::new(h).unwrap()
}

fn init_strategy() -> impl Strategy<Value = InitialState> {
    prop_oneof![Just(InitialState::AllZero), Just(InitialState::AllPlus)]
}

fn schedule_strategy(p: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = AngleSchedule> {
    p.prop_flat_map(|p| {
        (
            prop::collection::vec(-PI..PI, p),
            prop::collection::vec(-PI..PI, p),
        )
            .prop_map(|(g, b)| AngleSchedule::new(g, b))
    })
}

fn gate_strategy() -> impl Strategy<Value = Gate> {
    (
        prop_oneof![Just(GateKind::X), Just(GateKind::ZZ), Just(GateKind::YY)],
        -PI..PI,
    )
        .prop_map(|(kind, angle)| Gate::new(kind, angle))
}

fn sequence_strategy(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = GateSequence> {
    prop::collection::vec(gate_strategy(), n).prop_map(GateSequence::new)
}

/// Projective distance between two doublets, invariant under rescaling.
fn proj_dist(a: ProjectiveAmplitude, b: ProjectiveAmplitude) -> f64 {
    let cross = a.num * b.den - a.den * b.num;
    cross.norm() / (a.norm_sqr().sqrt() * b.norm_sqr().sqrt())
}

proptest! {
    #![proptest_config(config())]

    fn dispersion_is_even_and_gapped(h in 0.0f64..3.0, k in 1e-6f64..PI) {
        let f = field(h);
        prop_assert!((dispersion(f, k) - dispersion(f, -k)).abs() < 1e-12);
        prop_assert!(dispersion(f, k) > 0.0);
    }

    fn bogoliubov_rotation_is_antisymmetric(a in 0.0f64..3.0, b in 0.0f64..3.0, k in 0.0f64..=PI) {
        prop_assert!((bogoliubov_half_angle(a, b, k) + bogoliubov_half_angle(b, a, k)).abs() < 1e-12);
    }

    fn momentum_sectors_have_l_points(half in 1usize..64) {
        let l = 2 * half;
        let ns = MomentumGrid::neveu_schwarz(l).unwrap();
        let r = MomentumGrid::ramond(l).unwrap();
        prop_assert_eq!(ns.momenta.len(), l);
        prop_assert_eq!(r.momenta.len(), l);
        let has = |m: &[f64], x: f64| m.iter().any(|&k| (k - x).abs() < 1e-12);
        prop_assert!(!has(&ns.momenta, 0.0) && !has(&ns.momenta, -PI));
        prop_assert!(has(&r.momenta, 0.0) && has(&r.momenta, -PI));
    }

    fn ground_energy_decreases_with_field(h in 0.0f64..3.0, dh in 1e-3f64..1.0) {
        prop_assert!(ground_energy_density_inf(field(h + dh)) < ground_energy_density_inf(field(h)));
    }

    fn evolution_composes(
        a in sequence_strategy(0..=6),
        b in sequence_strategy(0..=6),
        init in init_strategy(),
        k in 0.01f64..PI,
    ) {
        let joint = evolve_final(&a.concat(&b), init, k);
        let staged = b.total_map(k).apply(evolve_final(&a, init, k));
        prop_assert!(proj_dist(joint, staged) < 1e-12);
    }

    fn rescaling_the_doublet_changes_nothing(
        re in -5.0f64..5.0, im in -5.0f64..5.0,
        sr in 0.1f64..10.0, sp in -PI..PI,
        h in 0.0f64..2.5, k in 0.01f64..3.1,
    ) {
        let a = ProjectiveAmplitude::from_value(Complex64::new(re, im));
        let c = Complex64::from_polar(sr, sp);
        let b = ProjectiveAmplitude::new(a.num * c, a.den * c);
        prop_assert!((a.weight() - b.weight()).abs() < 1e-12);
        prop_assert!((g_transform(a, k).weight() - g_transform(b, k).weight()).abs() < 1e-12);
        prop_assert!(proj_dist(project(a, field(h), k), project(b, field(h), k)) < 1e-12);
    }

    fn angles_have_period_half_pi(s in schedule_strategy(1..=4), which in 0usize..8, init in init_strategy(), k in 0.01f64..PI) {
        let mut x = s.to_flat();
        let j = which % x.len();
        x[j] += FRAC_PI_2;
        let shifted = AngleSchedule::from_flat(&x);
        let a = evolve_final(&s.to_sequence(), init, k);
        let b = evolve_final(&shifted.to_sequence(), init, k);
        prop_assert!(proj_dist(a, b) < 1e-12);
    }

    fn zero_state_even_layers_vanish_at_k0(s in schedule_strategy(1..=5)) {
        let traj = evolve(&s.to_sequence(), InitialState::AllZero, 0.0);
        for a in traj.amplitudes.iter().step_by(2) {
            prop_assert!(a.num.norm() < 1e-12 * a.den.norm());
        }
    }

    fn gradient_matches_central_differences(s in schedule_strategy(1..=3), h in 0.0f64..2.0, init in init_strategy()) {
        let seq = s.to_sequence();
        let l = light_cone_sites(s.depth());
        let (_, grad) = energy_and_gradient(&seq, field(h), l, init);
        let x = seq.angles();
        let step = 1e-6;
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let fd = (energy_density(&seq.with_angles(&xp), field(h), l, init)
                - energy_density(&seq.with_angles(&xm), field(h), l, init)) / (2.0 * step);
            prop_assert!((grad[j] - fd).abs() <= 1e-6 * fd.abs().max(1e-2), "{} vs {}", grad[j], fd);
        }
    }

    fn energy_is_size_independent_inside_light_cone(s in schedule_strategy(1..=4), h in 0.0f64..2.0, init in init_strategy(), extra in 0usize..6) {
        let l = light_cone_sites(s.depth());
        let seq = s.to_sequence();
        let a = energy_density(&seq, field(h), l, init);
        let b = energy_density(&seq, field(h), l + 2 * extra + 2, init);
        prop_assert!((a - b).abs() < 1e-12);
    }

    fn energy_respects_variational_bound(s in schedule_strategy(1..=3), h in 0.0f64..2.0, init in init_strategy(), half in 2usize..5) {
        let l = 2 * half;
        let e = energy_density(&s.to_sequence(), field(h), l, init);
        let gs = oracle::ground_state(l, h).unwrap();
        prop_assert!(e >= gs.energy() / l as f64 - 1e-12);
    }

    fn closed_form_matches_statevector(s in schedule_strategy(1..=3), h in 0.0f64..2.0, init in init_strategy(), half in 2usize..5) {
        let l = 2 * half;
        let seq = s.to_sequence();
        let st = oracle::simulate(l, &seq, init).unwrap();
        let e = oracle::expectation(&st, Observable::Energy(h)) / l as f64;
        prop_assert!((energy_density(&seq, field(h), l, init) - e).abs() < 1e-12);
        prop_assert!((magnetization_x_finite(&seq, l, init) - oracle::expectation(&st, Observable::X)).abs() < 1e-12);
    }

    fn statevector_evolution_is_unitary_and_translation_invariant(seq in sequence_strategy(1..=8), init in init_strategy()) {
        let st = oracle::simulate(8, &seq, init).unwrap();
        prop_assert!((st.norm() - 1.0).abs() < 1e-12);
        for obs in [Observable::X, Observable::Z, Observable::XX(2)] {
            let first = st.expectation_at(obs, 0);
            for j in 1..8 {
                prop_assert!((st.expectation_at(obs, j) - first).abs() < 1e-12);
            }
        }
    }

    fn plus_state_circuits_have_no_order(seq in sequence_strategy(1..=8)) {
        let st = oracle::simulate(8, &seq, InitialState::AllPlus).unwrap();
        prop_assert!(oracle::expectation(&st, Observable::Z).abs() < 1e-14);
    }

    fn dual_schedule_has_same_energy_and_mx(s in schedule_strategy(1..=4), h in 0.0f64..2.0) {
        let l = light_cone_sites(s.depth());
        let (a, b) = (s.to_sequence(), s.dual().to_sequence());
        let init = InitialState::AllZero;
        prop_assert!((energy_density(&a, field(h), l, init) - energy_density(&b, field(h), l, init)).abs() < 1e-12);
        let ma = magnetization_x(&CircuitAmplitude::new(&a, init), 256).value;
        let mb = magnetization_x(&CircuitAmplitude::new(&b, init), 256).value;
        prop_assert!((ma - mb).abs() < 1e-12);
    }

    fn pv_integral_is_linear(
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        c1 in -2.0f64..2.0, c2 in -2.0f64..2.0,
        lambda in 0.05f64..3.09,
    ) {
        let grid = QuadratureGrid::gauss_legendre(200);
        let f = move |k: f64| Complex64::new(k.cos(), c1 * k);
        let g = move |k: f64| Complex64::new((c2 * k).sin(), k * k);
        let lhs = pv_integral(|k| a * f(k) + b * g(k), lambda, &grid).unwrap();
        let rhs = a * pv_integral(f, lambda, &grid).unwrap() + b * pv_integral(g, lambda, &grid).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
    }

    fn determinant_matches_trace_series(
        c in prop::collection::vec(-1.0f64..1.0, 4),
        scale in 0.05f64..0.5,
    ) {
        // Rank-two kernel with spectral norm below one.
        let kernel = move |x: f64, y: f64| {
            Complex64::from(scale / PI * (c[0] * x.cos() * y.cos() + c[1] * x.sin() * y.sin()))
                + Complex64::new(0.0, 0.25 * scale / PI * (c[2] * (x - y).cos() + c[3]))
        };
        let grid = QuadratureGrid::gauss_legendre(48);
        let det = fredholm_det(&kernel, &grid);
        // tr(J^m) on the same Nyström discretisation.
        let n = grid.len();
        let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
        let j: Vec<Vec<Complex64>> = (0..n)
            .map(|a| (0..n).map(|b| sw[a] * kernel(grid.nodes[a], grid.nodes[b]) * sw[b]).collect())
            .collect();
        let mut power = j.clone();
        let mut log_det = Complex64::from(0.0);
        for m in 1..=20 {
            let tr: Complex64 = (0..n).map(|a| power[a][a]).sum();
            log_det -= tr / m as f64;
            power = (0..n)
                .map(|a| (0..n).map(|b| (0..n).map(|t| power[a][t] * j[t][b]).sum()).collect())
                .collect();
        }
        prop_assert!((det.ln() - log_det).norm() < 1e-6, "{} vs {}", det.ln(), log_det);
    }

    fn order_parameter_is_bounded(s in schedule_strategy(1..=2)) {
        let seq = s.to_sequence();
        let m = magnetization_z(&CircuitAmplitude::new(&seq, InitialState::AllZero));
        if !m.singular {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&m.value), "{m:?}");
        }
    }
}

proptest! {
    #![proptest_config(config())]

    fn accepted_bfgs_steps_never_raise_energy(s in schedule_strategy(1..=3), h in 0.0f64..2.0) {
        let l = light_cone_sites(s.depth());
        let template = s.to_sequence();
        let f = |x: &[f64]| energy_and_gradient(&template.with_angles(x), field(h), l, InitialState::AllZero);
        let mut last = f(&template.angles()).0;
        for iters in 1..=12 {
            let opts = BfgsOptions { max_iterations: iters, ..BfgsOptions::default() };
            let out = bfgs(f, &template.angles(), &opts);
            prop_assert!(out.value <= last + 1e-15, "iteration {iters}: {} > {last}", out.value);
            last = out.value;
        }
    }

    fn converged_optima_are_stationary_and_above_ground_energy(p in 1usize..=3, h in 0.05f64..2.0, seed in any::<u64>()) {
        let r = optimizer::minimize(field(h), p, InitialState::AllZero, seed, 2).unwrap();
        if r.converged {
            prop_assert!(r.grad_norm < 1e-8, "{}", r.grad_norm);
        }
        prop_assert!(r.energy - ground_energy_density_inf(field(h)) > 0.0);
    }

    fn same_seed_same_optimum(p in 1usize..=3, h in 0.0f64..2.0, seed in any::<u64>()) {
        let a = optimizer::minimize(field(h), p, InitialState::AllZero, seed, 2).unwrap();
        let b = optimizer::minimize(field(h), p, InitialState::AllZero, seed, 2).unwrap();
        prop_assert_eq!(a, b);
    }

    fn padded_circuits_nest(p in 1usize..=3, h in 0.0f64..2.0, seed in any::<u64>()) {
        let r = optimizer::minimize(field(h), p, InitialState::AllZero, seed, 1).unwrap();
        let deeper = optimizer::minimize_warm(field(h), p + 1, InitialState::AllZero, &pad_schedule(&r.schedule)).unwrap();
        prop_assert!(deeper.energy <= r.energy + 1e-12);
    }

    fn exact_preparation_reaches_unit_overlap(half in 1usize..=3, h in 0.1f64..2.0, seed in any::<u64>()) {
        let prep = experiments::solve_exact_preparation(2 * half, field(h), seed, 4).unwrap();
        if prep.success {
            prop_assert!((prep.overlap - 1.0).abs() < 1e-8);
            prop_assert!((prep.oracle_overlap.unwrap() - 1.0).abs() < 1e-8);
        }
    }
}

fn synthetic_curves(beta: f64, nu: f64) -> Curves {
    let phi = |x: f64| 0.9 * (1.0 - 0.8 * x).powf(0.3) + 0.05 * x;
    [20usize, 40, 60, 80]
        .iter()
        .map(|&p| {
            let pf = p as f64;
            let c = (0..50)
                .map(|i| {
                    let h = 0.95 + 0.05 * i as f64 / 49.0;
                    (h, pf.powf(-beta / nu) * phi((h - 1.0) * pf.powf(1.0 / nu)))
                })
                .collect();
            (p, c)
        })
        .collect()
}

proptest! {
    #![proptest_config(config())]

    fn collapse_recovers_planted_exponents(beta in 0.08f64..0.2, nu in 0.8f64..1.3) {
        let fit = experiments::collapse_fit(&synthetic_curves(beta, nu), 1.0, CollapseSide::Below).unwrap();
        prop_assert!((fit.beta - beta).abs() < 0.005, "{fit:?}");
        prop_assert!((fit.nu - nu).abs() < 0.05, "{fit:?}");
    }
}

/// Every suite by name; each panics on the first counterexample.
pub const ALL: &[(&str, fn())] = &[
    (
        "dispersion_is_even_and_gapped",
        dispersion_is_even_and_gapped,
    ),
    (
        "bogoliubov_rotation_is_antisymmetric",
        bogoliubov_rotation_is_antisymmetric,
    ),
    (
        "momentum_sectors_have_l_points",
        momentum_sectors_have_l_points,
    ),
    (
        "ground_energy_decreases_with_field",
        ground_energy_decreases_with_field,
    ),
    ("evolution_composes", evolution_composes),
    (
        "rescaling_the_doublet_changes_nothing",
        rescaling_the_doublet_changes_nothing,
    ),
    ("angles_have_period_half_pi", angles_have_period_half_pi),
    (
        "zero_state_even_layers_vanish_at_k0",
        zero_state_even_layers_vanish_at_k0,
    ),
    (
        "gradient_matches_central_differences",
        gradient_matches_central_differences,
    ),
    (
        "energy_is_size_independent_inside_light_cone",
        energy_is_size_independent_inside_light_cone,
    ),
    (
        "energy_respects_variational_bound",
        energy_respects_variational_bound,
    ),
    (
        "closed_form_matches_statevector",
        closed_form_matches_statevector,
    ),
    (
        "statevector_evolution_is_unitary_and_translation_invariant",
        statevector_evolution_is_unitary_and_translation_invariant,
    ),
    (
        "plus_state_circuits_have_no_order",
        plus_state_circuits_have_no_order,
    ),
    (
        "dual_schedule_has_same_energy_and_mx",
        dual_schedule_has_same_energy_and_mx,
    ),
    ("pv_integral_is_linear", pv_integral_is_linear),
    (
        "determinant_matches_trace_series",
        determinant_matches_trace_series,
    ),
    ("order_parameter_is_bounded", order_parameter_is_bounded),
    (
        "accepted_bfgs_steps_never_raise_energy",
        accepted_bfgs_steps_never_raise_energy,
    ),
    (
        "converged_optima_are_stationary_and_above_ground_energy",
        converged_optima_are_stationary_and_above_ground_energy,
    ),
    ("same_seed_same_optimum", same_seed_same_optimum),
    ("padded_circuits_nest", padded_circuits_nest),
    (
        "exact_preparation_reaches_unit_overlap",
        exact_preparation_reaches_unit_overlap,
    ),
    (
        "collapse_recovers_planted_exponents",
        collapse_recovers_planted_exponents,
    ),
];

#[allow(dead_code)]
pub fn run(name: &str) {
    let (_, suite) = ALL.iter().find(|(n, _)| *n == name).expect("known suite");
    suite();
}
