//! Property suites for the library's structural invariants: projector
//! algebra, operator degenerations, nonexpansiveness on convex instances,
//! and trace consistency.

mod common;

use common::*;
use feasolve_core::diagnostics;
use feasolve_core::engine::{self, StopCriteria};
use feasolve_core::geometry::SetSpec;
use feasolve_core::operators::{cyclic_projections, CycleOp, PairDROp};
use feasolve_core::point::Point;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn projection_is_idempotent() {
    let mut rng = rng(11);
    for trial in 0..1000 {
        let n = [2, 3, 5][trial % 3];
        let set = random_set(&mut rng, n);
        let x = random_point(&mut rng, n, 10.0);
        let p = set.project(&x).unwrap().point;
        let pp = set.project(&p).unwrap().point;
        assert!(
            p.dist(&pp) <= 1e-10,
            "idempotence failed on {set:?} at {x:?}"
        );
        // The projection lies in the set and attains the distance.
        assert!(set.contains(&p, 1e-10).unwrap());
        assert!((x.dist(&p) - set.distance(&x).unwrap()).abs() <= 1e-10);
    }
}

#[test]
fn reflector_identity_and_distance_consistency() {
    let mut rng = rng(12);
    for trial in 0..500 {
        let n = [2, 3, 5][trial % 3];
        let set = random_set(&mut rng, n);
        let x = random_point(&mut rng, n, 10.0);
        let p = set.project(&x).unwrap().point;
        let r = set.reflect(&x).unwrap();
        assert_eq!(r, &p * 2.0 - &x, "reflector identity must hold exactly");
        assert!((set.distance(&x).unwrap() - x.dist(&p)).abs() <= 1e-12);
    }
}

#[test]
fn convex_projectors_are_firmly_nonexpansive() {
    let mut rng = rng(13);
    for trial in 0..500 {
        let n = [2, 3, 5][trial % 3];
        let set = random_convex_set(&mut rng, n);
        let x = random_point(&mut rng, n, 10.0);
        let y = random_point(&mut rng, n, 10.0);
        let px = set.project(&x).unwrap().point;
        let py = set.project(&y).unwrap().point;
        let lhs = px.dist(&py).powi(2) + ((&px - &x) - (&py - &y)).norm_sq();
        assert!(
            lhs <= x.dist(&y).powi(2) + 1e-10,
            "firm nonexpansiveness failed on {set:?}"
        );
    }
}

type SetSampler = Box<dyn Fn(&mut rand_chacha::ChaCha8Rng) -> Point>;

#[test]
fn shapiro_inequality_holds_empirically() {
    let mut rng = rng(14);
    for trial in 0..300 {
        let n = [2, 3, 4][trial % 3];
        // Sets with subspace tangent cones: affine and sphere.
        let (set, on_set): (SetSpec, SetSampler) = if trial % 2 == 0 {
            let k = rng.gen_range(1..=n - 1);
            let spanning: Vec<Point> = (0..k).map(|_| random_point(&mut rng, n, 1.0)).collect();
            let anchor = random_point(&mut rng, n, 2.0);
            let set = SetSpec::affine(anchor.clone(), spanning).unwrap();
            let basis: Vec<Point> = match &set {
                SetSpec::Affine(s) => s.basis().to_vec(),
                _ => unreachable!(),
            };
            (
                set,
                Box::new(move |rng: &mut rand_chacha::ChaCha8Rng| {
                    let mut p = anchor.clone();
                    for b in &basis {
                        p = p + b * rng.gen_range(-2.0..2.0);
                    }
                    p
                }),
            )
        } else {
            let center = random_point(&mut rng, n, 2.0);
            let radius = rng.gen_range(0.5..2.0);
            let set = SetSpec::sphere(center.clone(), radius).unwrap();
            let c = center.clone();
            (
                set,
                Box::new(move |rng: &mut rand_chacha::ChaCha8Rng| {
                    &c + &random_unit(rng, n).scale(radius)
                }),
            )
        };
        let y = on_set(&mut rng);
        let x = &y + &random_point(&mut rng, n, 0.5);
        let tangent = set.tangent_space(&y).unwrap();
        let k = tangent.shapiro_constant().unwrap();
        let v = &x - &y;
        let d = (&v - &tangent.project_direction(&v)).norm();
        assert!(
            d <= k * v.norm() + 1e-10,
            "Shapiro inequality failed: d = {d}, k|v| = {}",
            k * v.norm()
        );
    }
}

#[test]
fn multivalued_ties_are_deterministic() {
    let sphere = SetSpec::sphere(Point(vec![1.0, -2.0, 0.5]), 2.0).unwrap();
    let center = Point(vec![1.0, -2.0, 0.5]);
    let first = sphere.project(&center).unwrap();
    for _ in 0..10 {
        assert_eq!(sphere.project(&center).unwrap(), first);
    }

    let cloud = SetSpec::cloud(vec![
        Point(vec![0.0, 0.0]),
        Point(vec![2.0, 0.0]),
        Point(vec![1.0, 1.0]),
    ])
    .unwrap();
    let mid = Point(vec![1.0, 0.0]);
    let first = cloud.project(&mid).unwrap();
    for _ in 0..10 {
        assert_eq!(cloud.project(&mid).unwrap(), first);
    }
}

#[test]
fn pair_formulas_agree_on_random_instances() {
    let mut rng = rng(15);
    for trial in 0..1000 {
        let n = [2, 3, 5][trial % 3];
        let inner = random_convex_set(&mut rng, n);
        let outer = random_convex_set(&mut rng, n);
        let lambda = rng.gen_range(0.0..=1.0);
        let op = PairDROp::new(inner, outer, lambda).unwrap();
        let x = random_point(&mut rng, n, 10.0);
        let a = op.apply(&x).unwrap();
        let b = op.apply_alt(&x).unwrap();
        assert!(a.dist(&b) <= 1e-12, "trial {trial}: {} apart", a.dist(&b));
    }
}

#[test]
fn lambda_degenerations() {
    let mut rng = rng(16);
    for trial in 0..500 {
        let n = [2, 3][trial % 2];
        let m = 2 + trial % 3;
        let sets: Vec<SetSpec> = (0..m).map(|_| random_convex_set(&mut rng, n)).collect();
        let x = random_point(&mut rng, n, 10.0);

        // lambda = 0: the cycle is the cyclic projection operator.
        let op = CycleOp::new(sets.clone(), 0.0).unwrap();
        let via_cycle = op.apply_point(&x).unwrap();
        let via_cp = cyclic_projections(&sets, &x).unwrap();
        assert!(via_cycle.dist(&via_cp) <= 1e-12);

        // lambda = 1: the pair operator is the classical Douglas-Rachford map.
        let pair = PairDROp::new(sets[0].clone(), sets[1].clone(), 1.0).unwrap();
        let lhs = pair.apply(&x).unwrap();
        let rr = sets[0].reflect(&sets[1].reflect(&x).unwrap()).unwrap();
        let classical = (rr + &x) * 0.5;
        assert!(lhs.dist(&classical) <= 1e-12);
    }
}

#[test]
fn cycle_is_nonexpansive_on_convex_instances() {
    let mut rng = rng(17);
    for trial in 0..200 {
        let n = [2, 3][trial % 2];
        let m = 2 + trial % 3;
        let sets: Vec<SetSpec> = (0..m).map(|_| random_convex_set(&mut rng, n)).collect();
        let lambda = rng.gen_range(0.0..=1.0);
        let op = CycleOp::new(sets, lambda).unwrap();
        let x = random_point(&mut rng, n, 10.0);
        let y = random_point(&mut rng, n, 10.0);
        let tx = op.apply_point(&x).unwrap();
        let ty = op.apply_point(&y).unwrap();
        assert!(tx.dist(&ty) <= x.dist(&y) + 1e-10, "trial {trial}");
    }
}

#[test]
fn residuals_monotone_on_convex_instances() {
    let mut rng = rng(18);
    for trial in 0..50 {
        let n = 2 + trial % 2;
        let (sets, _) = random_consistent_instance(&mut rng, n);
        let op = CycleOp::new(sets, 0.5).unwrap();
        let x0 = random_point(&mut rng, n, 5.0);
        let stop = StopCriteria {
            max_iters: 60,
            step_tol: 0.0,
            shadow_tol: 0.0,
            residual_tol: 0.0,
        };
        let trace = engine::iterate(&op, &x0, &stop).unwrap();
        for w in trace.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "residuals increased: {w:?}");
        }
    }
}

#[test]
fn gap_total_always_sums_pair_gaps() {
    let mut rng = rng(19);
    for trial in 0..200 {
        let n = [2, 3, 5][trial % 3];
        let m = 2 + trial % 3;
        let sets: Vec<SetSpec> = (0..m).map(|_| random_set(&mut rng, n)).collect();
        let y = random_point(&mut rng, n, 10.0);
        let report = diagnostics::gap_at(&sets, &y).unwrap();
        assert_eq!(report.pair_gaps.len(), m);
        assert_eq!(report.shadow_chain.len(), m + 1);
        assert_eq!(report.total, report.pair_gaps.iter().sum::<f64>());
        // Chain membership: entry i lies in A_{m+1-i}.
        assert!(sets[0].contains(&report.shadow_chain[0], 1e-10).unwrap());
        for (i, p) in report.shadow_chain.iter().enumerate().skip(1) {
            assert!(sets[m - i].contains(p, 1e-10).unwrap());
        }
    }
}

#[test]
fn extended_and_plain_cyclic_projections_share_fixed_points() {
    use feasolve_core::operators::extended_cyclic_projections;
    let mut rng = rng(21);
    for trial in 0..30 {
        let n = 2 + trial % 2;
        let m = 2 + trial % 3;
        let sets: Vec<SetSpec> = (0..m).map(|_| random_convex_set(&mut rng, n)).collect();
        // Plain composition P_{A_1} o ... o P_{A_m}: rightmost acts first.
        let plain = |x: &Point| -> Point {
            let mut cur = x.clone();
            for s in sets.iter().rev() {
                cur = s.project(&cur).unwrap().point;
            }
            cur
        };
        let mut z = random_point(&mut rng, n, 5.0);
        for _ in 0..5000 {
            let next = extended_cyclic_projections(&sets, &z).unwrap();
            let step = next.dist(&z);
            z = next;
            if step < 1e-13 {
                break;
            }
        }
        // A fixed point of the extended composition is fixed for the plain
        // one, and vice versa.
        if z.dist(&extended_cyclic_projections(&sets, &z).unwrap()) < 1e-10 {
            assert!(plain(&z).dist(&z) <= 1e-9, "trial {trial}");
        }
        let mut w = random_point(&mut rng, n, 5.0);
        for _ in 0..5000 {
            let next = plain(&w);
            let step = next.dist(&w);
            w = next;
            if step < 1e-13 {
                break;
            }
        }
        if plain(&w).dist(&w) < 1e-10 {
            assert!(
                extended_cyclic_projections(&sets, &w).unwrap().dist(&w) <= 1e-9,
                "trial {trial}"
            );
        }
    }
}

#[test]
fn characterization_equivalence_across_lambda_and_m() {
    use feasolve_core::analysis::characterize_fixed_point;
    let mut rng = rng(22);
    for trial in 0..20 {
        let n = 3 + trial % 2;
        let (base, z) = random_consistent_instance(&mut rng, n);
        for m in [2usize, 3, 4] {
            // Pad the instance with extra sets through the common point.
            let mut sets = base.clone();
            while sets.len() < m {
                let normal = random_unit(&mut rng, n);
                let offset = normal.dot(&z);
                sets.push(SetSpec::hyperplane(normal, offset).unwrap());
            }
            sets.truncate(m);
            for lambda in [0.1, 0.3, 0.5, 0.7, 0.9] {
                // At the common point: fixed, and the identity closes.
                let report = characterize_fixed_point(&sets, lambda, &z, 1e-8).unwrap();
                assert!(report.is_fixed);
                assert!(report.representation_residual <= 1e-8);

                // Away from the fixed set: the identity fails by the same
                // margin, scaled by 1/(1 - lambda^m).
                let x = &z + &random_unit(&mut rng, n).scale(0.5);
                let report = characterize_fixed_point(&sets, lambda, &x, 1e-8).unwrap();
                let chain_gap = report.chain_x.last().unwrap().dist(&x);
                if chain_gap > 1e-6 {
                    assert!(!report.is_fixed);
                    assert!(report.representation_residual > 1e-8);
                    let predicted = chain_gap / (1.0 - lambda.powi(m as i32));
                    assert!(
                        (report.representation_residual - predicted).abs()
                            <= 1e-9 * predicted.max(1.0),
                        "residual {} vs algebraic value {predicted}",
                        report.representation_residual
                    );
                }
            }
        }
    }
}

#[test]
fn affine_instances_satisfy_any_positive_budget() {
    use feasolve_core::analysis::{verify_shadow_almost_fixed, AffineApproxBudget};
    let sets = parallel_lines();
    let op = CycleOp::new(sets.clone(), 0.5).unwrap();
    let stop = StopCriteria {
        max_iters: 10_000,
        step_tol: 0.0,
        shadow_tol: 0.0,
        residual_tol: 1e-10,
    };
    let trace = engine::iterate(&op, &Point(vec![0.4, -0.2]), &stop).unwrap();
    let fixed = trace.final_iterate().clone();
    let chain = diagnostics::gap_at(&sets, &fixed).unwrap().shadow_chain;
    let anchors = vec![chain[2].clone(), chain[1].clone()];
    let budget =
        AffineApproxBudget::for_instance(&sets, &anchors, &[1e-9, 1e-9], &[0.0, 0.0]).unwrap();
    let report = verify_shadow_almost_fixed(&sets, 0.5, &fixed, &budget, 1e-8).unwrap();
    assert!(report.observed_residual < 1e-10);
    assert!(report.holds);
}

#[test]
fn budget_soundness_on_the_circle_line_instance() {
    use feasolve_core::analysis::{verify_shadow_almost_fixed, AffineApproxBudget};

    let sets = vec![
        SetSpec::sphere(Point(vec![0.0, 0.0]), 1.0).unwrap(),
        SetSpec::hyperplane(Point(vec![0.0, 1.0]), 0.5).unwrap(),
    ];
    let op = CycleOp::new(sets.clone(), 0.4).unwrap();
    let target = Point(vec![3.0f64.sqrt() / 2.0, 0.5]);
    let per_set_eps = [0.05, 0.05];
    let eps_u = [0.0, 0.0];

    let mut rng = rng(20);
    let mut held = 0usize;
    for _ in 0..100 {
        let x0 = &target + &random_point(&mut rng, 2, 0.08);
        let stop = StopCriteria {
            max_iters: 20_000,
            step_tol: 0.0,
            shadow_tol: 0.0,
            residual_tol: 1e-10,
        };
        let trace = engine::iterate(&op, &x0, &stop).unwrap();
        let fixed = trace.final_iterate().clone();
        let chain = diagnostics::gap_at(&sets, &fixed).unwrap().shadow_chain;
        let anchors = vec![chain[2].clone(), chain[1].clone()];
        let budget =
            AffineApproxBudget::for_instance(&sets, &anchors, &per_set_eps, &eps_u).unwrap();
        let report = verify_shadow_almost_fixed(&sets, 0.4, &fixed, &budget, 1e-8).unwrap();
        if report.holds {
            held += 1;
        }
    }
    assert!(held >= 95, "budget held on only {held}/100 approximations");
}

proptest! {
    /// JSON round-trip is lossless for validated sets.
    #[test]
    fn setspec_json_round_trip(seed in 0u64..5000) {
        let mut r = rng(seed);
        let n = 2 + (seed % 3) as usize;
        let set = random_set(&mut r, n);
        let json = serde_json::to_string(&set).unwrap();
        let back: SetSpec = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, set);
    }

    /// Violation calculus is monotone and vanishes at zero.
    #[test]
    fn violation_calculus_monotone(e1 in 0.0..0.8f64, e2 in 0.0..0.8f64, lambda in 0.0..=1.0f64) {
        use feasolve_core::analysis::{cycle_budget, pair_violation, projector_violations};
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let vlo = projector_violations(lo).unwrap();
        let vhi = projector_violations(hi).unwrap();
        prop_assert!(vlo.eps_hat <= vhi.eps_hat);
        prop_assert!(vlo.eps_check <= vhi.eps_check);
        prop_assert!(vlo.eps_tilde <= vhi.eps_tilde);
        prop_assert_eq!(projector_violations(0.0).unwrap().eps_tilde, 0.0);

        prop_assert!(pair_violation(lambda, lo, 0.1).unwrap() <= pair_violation(lambda, hi, 0.1).unwrap());
        prop_assert!(pair_violation(lambda, 0.1, lo).unwrap() <= pair_violation(lambda, 0.1, hi).unwrap());
        prop_assert_eq!(pair_violation(lambda, 0.0, 0.0).unwrap(), 0.0);

        let b_lo = cycle_budget(&[lo, 0.2], 2).unwrap();
        let b_hi = cycle_budget(&[hi, 0.2], 2).unwrap();
        prop_assert!(b_lo.eps <= b_hi.eps);
        prop_assert_eq!(cycle_budget(&[0.0, 0.0], 2).unwrap().eps, 0.0);
    }

    /// Almost-fixed sets are nested in the error parameter.
    #[test]
    fn almost_fixed_nesting(t in -3.0..3.0f64, eps2 in 0.0..0.5f64, extra in 1e-6..0.5f64) {
        let op = CycleOp::new(parallel_lines(), 0.5).unwrap();
        let x = Point(vec![0.0, t]);
        let eps1 = eps2 + extra;
        if diagnostics::almost_fixed(&op, &x, eps2).unwrap() {
            prop_assert!(diagnostics::almost_fixed(&op, &x, eps1).unwrap());
        }
    }
}
