use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::boundary::dirichlet;
use crate::phase::{make_surface_graph_metric, random_points, GaussianBumps, MetricHamiltonian};
use crate::shooting::{multistart, MultistartPlan, SolveOptions};

fn samples(n: usize, count: usize) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    random_points(&mut rng, n, count, 1.0, 1.0)
}

#[test]
fn momentum_scaling_is_exact_for_metric_models() {
    let action = ScalingAction::momentum_scaling(2, 2.0);
    let flat = MetricHamiltonian::flat(2);
    let bump = make_surface_graph_metric(GaussianBumps::single(2, 1.0, 1.0));
    assert!(verify_invariance(&action, &flat, &samples(2, 50)).unwrap() <= 1e-12);
    assert!(verify_invariance(&action, &bump, &samples(2, 50)).unwrap() <= 1e-12);
}

#[test]
fn two_generator_polynomial_is_invariant_and_perturbation_is_detected() {
    let (model, action) = two_scaling_system(1.0, 0.5).unwrap();
    let pts = samples(3, 50);
    assert!(verify_invariance(&action, &model, &pts).unwrap() <= 1e-12);
    let broken = model.with_term(Monomial::new(1e-3, vec![5, 0, 0], vec![0, 0, 0])).unwrap();
    let err = verify_invariance(&action, &broken, &pts).unwrap();
    assert!(err > 1e-5 && err < 1e-1, "err {err}");
}

#[test]
fn factor_algebra_is_multiplicative() {
    let action = ScalingAction::new(vec![vec![0.3, -0.2]], 1.0, 2.5).unwrap();
    for (l, m) in [(0.5, 2.0), (1.3, 0.7), (3.0, 0.1)] {
        assert!((action.theta(l * m) - action.theta(l) * action.theta(m)).abs() <= 1e-14);
        assert!((action.eta(l * m) - action.eta(l) * action.eta(m)).abs() <= 1e-12 * action.eta(l * m));
    }
    for row in action.symplectic_form_exponents() {
        assert!(row.iter().all(|&e| e == action.c));
    }
}

#[test]
fn rescaling_identity_and_commutativity() {
    let (model, action) = two_scaling_system(1.0, 0.5).unwrap();
    let pts: Vec<PhasePoint> = samples(3, 6).into_iter().map(|z| PhasePoint { x: z.x * 0.5, y: z.y * 0.5 }).collect();
    let spec = IntegratorSpec::midpoint(1e-3);
    let same = verify_rescaling_lemma(&action, &model, &spec, &pts, 0.3, &[1.0]).unwrap();
    assert!(same.max_residual == 0.0);
    let check = verify_rescaling_lemma(&action, &model, &IntegratorSpec::reference(1e-12), &pts, 0.3, &[0.8, 1.25]).unwrap();
    assert!(check.max_residual <= 1e-6, "{check:?}");
    assert!(check.commutator <= 1e-12);
}

#[test]
fn geodesic_rescaling_with_reference_integrator() {
    let action = ScalingAction::momentum_scaling(2, 2.0);
    let bump = make_surface_graph_metric(GaussianBumps::single(2, 1.0, 1.0));
    let check =
        verify_rescaling_lemma(&action, &bump, &IntegratorSpec::reference(1e-12), &samples(2, 5), 0.5, &[2.0]).unwrap();
    assert!(check.max_residual <= 1e-6, "{check:?}");
}

#[test]
fn composition_rules() {
    let n = 3;
    let chi = ScalingAction::momentum_scaling(n, 2.0);
    let psi = ScalingAction { exponents: vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]], c: 0.0, p: 0.0 };
    let composed = compose_actions(&chi, &psi).unwrap();
    let (_, expected) = two_scaling_system(1.0, 1.0).unwrap();
    assert_eq!(composed, expected);

    let identity = ScalingAction { exponents: vec![vec![0.0; n]], c: 0.0, p: 0.0 };
    assert_eq!(compose_actions(&expected, &identity).unwrap(), expected);

    let s1 = ScalingAction { exponents: vec![vec![1.0, 0.0, 0.0]], c: 0.0, p: 0.0 };
    let s2 = ScalingAction { exponents: vec![vec![0.0, 1.0, 0.0]], c: 0.0, p: 0.0 };
    let both = compose_actions(&s1, &s2).unwrap();
    assert_eq!(both.theta(3.0), 1.0);
    assert!(!both.is_nonstationary());

    let not_symplectic = ScalingAction::momentum_scaling(n, 2.0);
    assert!(matches!(compose_actions(&chi, &not_symplectic), Err(Error::InvalidAction(_))));
    let dependent = ScalingAction { exponents: vec![vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]], c: 0.0, p: 0.0 };
    assert!(matches!(compose_actions(&dependent, &identity), Err(Error::InvalidAction(_))));
}

#[test]
fn invalid_actions_are_rejected() {
    assert!(ScalingAction::new(vec![], 1.0, 2.0).is_err());
    assert!(ScalingAction::new(vec![vec![1.0, 0.0], vec![2.0, 0.0]], 0.0, 2.0).is_err());
    assert!(ScalingAction::new(vec![vec![1.0], vec![0.0], vec![2.0]], 1.0, 2.0).is_err());
    let symplectic = ScalingAction::new(vec![vec![1.0, -1.0]], 0.0, 0.0).unwrap();
    assert!(!symplectic.is_nonstationary());
    let (_, two) = two_scaling_system(1.0, 1.0).unwrap();
    assert!(two.is_nonstationary());
    assert!(!two.nonstationary_all_directions());
    assert!(ScalingAction::momentum_scaling(2, 2.0).nonstationary_all_directions());
}

fn geodesic_solutions<'a>(bvp: &LagrangianBvp<'a>) -> Vec<SolutionPoint> {
    let plan = MultistartPlan { center: vec![0.0, 2.0], ..MultistartPlan::new(2, 3.0, 24) };
    multistart(bvp, &plan, &SolveOptions::default()).unwrap()
}

#[test]
fn geodesic_dirichlet_problems_meet_the_bound() {
    let bump = make_surface_graph_metric(GaussianBumps::single(2, 1.0, 1.0));
    let spec = IntegratorSpec::midpoint(1e-2);
    let bvp = LagrangianBvp::new(&bump, dirichlet(&[0.0, -1.5], &[0.2, 1.5]).unwrap(), spec).unwrap();
    let sols = geodesic_solutions(&bvp);
    assert!(!sols.is_empty());
    let action = ScalingAction::momentum_scaling(2, 2.0);
    let report = check_obstruction(&action, &bvp, &sols, &ObstructionOptions::default()).unwrap();
    assert_eq!(report.status, CheckStatus::Pass, "{report:?}");
    for r in &report.records {
        assert!(r.degeneracy <= 1);
        assert!((r.mechanism_ratio - 1.0).abs() < 1e-3, "ratio {}", r.mechanism_ratio);
    }
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"status\":\"pass\""));
}

#[test]
fn flat_dirichlet_is_nondegenerate() {
    let flat = MetricHamiltonian::flat(2);
    let bvp = LagrangianBvp::new(&flat, dirichlet(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), IntegratorSpec::midpoint(1e-2)).unwrap();
    let sol = crate::shooting::solve(&bvp, &DVector::from_vec(vec![0.5, 0.5]), &SolveOptions::default()).unwrap();
    let report =
        check_obstruction(&ScalingAction::momentum_scaling(2, 2.0), &bvp, &[sol], &ObstructionOptions::default()).unwrap();
    assert_eq!(report.records[0].degeneracy, 0);
    assert!(report.pass);
}

#[test]
fn neumann_boundary_does_not_meet_the_hypotheses() {
    let bump = make_surface_graph_metric(GaussianBumps::single(2, 1.0, 1.0));
    let spec = IntegratorSpec::midpoint(1e-2);
    let z0 = PhasePoint::from_slices(&[-0.8, -0.3], &[1.0, 0.5]).unwrap();
    let end = crate::flow::flow(&bump, &z0, 1.0, &spec).unwrap();
    let b = crate::boundary::neumann(z0.y.as_slice(), end.y.as_slice()).unwrap();
    let bvp = LagrangianBvp::new(&bump, b, spec).unwrap();
    let u0 = bvp.coordinates(&z0) + DVector::from_vec(vec![0.01, -0.01]);
    let sol = crate::shooting::solve(&bvp, &u0, &SolveOptions::default()).unwrap();
    assert!(sol.converged, "{sol:?}");
    let report =
        check_obstruction(&ScalingAction::momentum_scaling(2, 2.0), &bvp, &[sol], &ObstructionOptions::default()).unwrap();
    assert_eq!(report.status, CheckStatus::HypothesesNotMet);
    assert!(!report.pass);
}
