use approx::assert_relative_eq;
use proptest::prelude::*;

use gaussflow::entropy::{entropy_at, entropy_lower_bound_check, entropy_point};
use gaussflow::flow::{step, FlowConfig, FlowState};
use gaussflow::normalized::{normalized_step, NormalizedState};
use gaussflow::reference::{projected_sphere_ode, sphere_ode};
use gaussflow::spaceform::{curvature_factor, lift, project, Ambient, Frame, Kappa, RadialGraph};
use gaussflow::sphere::{body_geometry, eval_weingarten, volume, Dim, SupportField};

fn dim() -> impl Strategy<Value = Dim> {
    prop_oneof![Just(Dim::Circle), Just(Dim::Axisymmetric)]
}

fn random_body(dim: Dim, radius: f64, seed: u64) -> SupportField {
    let len = if dim == Dim::Circle { 128 } else { 64 };
    SupportField::random(dim, len, radius, seed).unwrap()
}

/// Offsets along the symmetry axis only for the axisymmetric grid.
fn offset(dim: Dim, a: f64, b: f64) -> [f64; 2] {
    match dim {
        Dim::Circle => [a, b],
        Dim::Axisymmetric => [a, 0.0],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn geometry_invariants_hold(d in dim(), r in 0.2..3.0f64, seed in any::<u64>()) {
        let u = random_body(d, r, seed);
        let g = body_geometry(&u).unwrap();
        prop_assert!(g.satisfies_volume_radius_bounds(d), "{g:?}");
        let c = eval_weingarten(&u).unwrap();
        for (k, s) in c.gauss_k.iter().zip(&c.sigma_n) {
            prop_assert!((k * s - 1.0).abs() <= 1e-12);
        }
        prop_assert!(c.principal_radii.iter().flatten().all(|l| *l > 0.0));
    }

    #[test]
    fn volume_is_translation_invariant(d in dim(), seed in any::<u64>(), a in -0.5..0.5f64, b in -0.5..0.5f64) {
        let u = random_body(d, 1.0, seed);
        let moved = u.translated(offset(d, a, b));
        assert_relative_eq!(volume(&moved).unwrap(), volume(&u).unwrap(), max_relative = 1e-7);
    }

    #[test]
    fn project_and_lift_are_inverse(k in prop_oneof![Just(Kappa::Sphere), Just(Kappa::Hyperbolic)],
                                    base in 0.1..1.2f64, amp in 0.0..0.3f64, phase in 0.0..6.0f64) {
        let g = RadialGraph::from_fn(Ambient::Spaceform(k), Dim::Circle, 64, |x| {
            base * (1.0 + amp * (2.0 * x[1].atan2(x[0]) + phase).cos())
        }).unwrap();
        let back = lift(&project(&g).unwrap(), k).unwrap();
        for (a, b) in back.values().iter().zip(g.values()) {
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn curvature_factor_ordering(u in 0.0..0.95f64, share in 1e-6..0.99f64, n in 1usize..=2) {
        // hyperbolic domain: u² + |∇u|² < 1
        let grad = share * (1.0 - u * u);
        prop_assert!(curvature_factor(u, grad, Kappa::Sphere, n).unwrap() >= 1.0);
        prop_assert!(curvature_factor(u, grad, Kappa::Hyperbolic, n).unwrap() <= 1.0);
        prop_assert_eq!(curvature_factor(u, grad, Kappa::Flat, n).unwrap(), 1.0);
    }

    #[test]
    fn entropy_is_translation_covariant(seed in any::<u64>(), alpha in 0.3..4.0f64,
                                        b in (-0.4..0.4f64, -0.4..0.4f64), z in (-0.1..0.1f64, -0.1..0.1f64)) {
        let u = random_body(Dim::Circle, 1.0, seed);
        let moved = u.translated([b.0, b.1]);
        let here = entropy_at(&u, [z.0, z.1], alpha).unwrap();
        let there = entropy_at(&moved, [z.0 + b.0, z.1 + b.1], alpha).unwrap();
        prop_assert!((here - there).abs() <= 1e-13 * here.abs().max(1.0));
    }

    #[test]
    fn entropy_is_concave_on_segments(seed in any::<u64>(), alpha in 0.3..4.0f64,
                                      p in (-0.2..0.2f64, -0.2..0.2f64), q in (-0.2..0.2f64, -0.2..0.2f64)) {
        let u = random_body(Dim::Circle, 1.0, seed);
        let mid = [(p.0 + q.0) / 2.0, (p.1 + q.1) / 2.0];
        let e = |z| entropy_at(&u, z, alpha).unwrap();
        prop_assert!(e(mid) >= (e([p.0, p.1]) + e([q.0, q.1])) / 2.0 - 1e-12);
    }

    #[test]
    fn entropy_point_dominates(seed in any::<u64>(), alpha in 0.3..4.0f64, z in (-0.2..0.2f64, -0.2..0.2f64)) {
        let u = random_body(Dim::Circle, 1.0, seed);
        let (_, best) = entropy_point(&u, alpha).unwrap();
        prop_assert!(best >= entropy_at(&u, [z.0, z.1], alpha).unwrap() - 1e-12);
    }

    #[test]
    fn normalized_bodies_have_nonnegative_entropy(d in dim(), seed in any::<u64>(), alpha in 0.3..4.0f64) {
        let u = random_body(d, 1.0, seed);
        let pin = (d.unit_ball_volume() / volume(&u).unwrap()).powf(1.0 / (d.n() as f64 + 1.0));
        prop_assert!(entropy_lower_bound_check(&u.scaled(pin), alpha).unwrap());
    }

    #[test]
    fn sphere_radius_decreases_and_orders_extinction(k in prop_oneof![Just(Kappa::Sphere), Just(Kappa::Flat), Just(Kappa::Hyperbolic)],
                                                     n in 1usize..=2, alpha in 0.3..3.0f64,
                                                     r0 in 0.1..0.8f64, grow in 1.01..1.2f64) {
        let small = projected_sphere_ode(k, n, alpha, r0).unwrap();
        let large = projected_sphere_ode(k, n, alpha, (r0 * grow).min(0.95)).unwrap();
        prop_assert!(small.t_star <= large.t_star);
        let table = small.table(12);
        prop_assert!(table.windows(2).all(|w| w[1].1 < w[0].1));
        prop_assert_eq!(table.last().unwrap().1, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unnormalized_flow_shrinks_and_keeps_psi_bounded(k in prop_oneof![Just(Kappa::Sphere), Just(Kappa::Flat), Just(Kappa::Hyperbolic)],
                                                       seed in any::<u64>(), alpha in 0.5..2.0f64) {
        let u = random_body(Dim::Circle, 0.4, seed);
        let cfg = FlowConfig::new(alpha, k).resolved_for(&u).unwrap();
        let a = cfg.psi_bound_a.unwrap_or(1.0);
        let mut st = FlowState::new(u, &cfg).unwrap();
        for _ in 0..40 {
            let next = step(&st, &cfg).unwrap();
            prop_assert!(next.tau > st.tau);
            prop_assert!(next.geometry.volume < st.geometry.volume);
            prop_assert!(next.psi_min >= 1.0 / a && next.psi_max <= a);
            prop_assert!(next.k_min > 0.0);
            st = next;
        }
    }

    #[test]
    fn normalized_steps_pin_volume(d in dim(), seed in any::<u64>(), alpha in 0.5..2.0f64) {
        let u = random_body(d, 0.8, seed);
        let cfg = FlowConfig::new(alpha, Kappa::Flat);
        let mut st = NormalizedState::from_unnormalized(&u, 0.0, Frame::identity(Kappa::Flat), &cfg).unwrap();
        for _ in 0..40 {
            let next = normalized_step(&st, &cfg).unwrap();
            prop_assert!(next.t > st.t);
            prop_assert!(next.volume_error() <= 1e-6);
            st = next;
        }
    }

    #[test]
    fn geodesic_oracle_matches_its_projection(k in prop_oneof![Just(Kappa::Sphere), Just(Kappa::Hyperbolic)],
                                              alpha in 0.4..2.5f64, rho in 0.2..1.0f64) {
        let geo = sphere_ode(k, 1, alpha, rho).unwrap();
        let r0 = if k == Kappa::Sphere { rho.tan() } else { rho.tanh() };
        let proj = projected_sphere_ode(k, 1, alpha, r0).unwrap();
        prop_assert!((geo.t_star - proj.t_star).abs() <= 1e-8 * geo.t_star);
    }
}
