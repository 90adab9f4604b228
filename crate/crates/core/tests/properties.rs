//! Property tests of structural invariants across modules.

use conj_atlas::boundary::{dirichlet, frame_isotropy_defect, random_lagrangian_plane, LagrangianBvp};
use conj_atlas::flow::{flow, flow_symplecticity_defect, flow_with_tangent, rescaling_residual, IntegratorSpec};
use conj_atlas::locus::{direction_from_angles, RayFan};
use conj_atlas::phase::{make_surface_graph_metric, GaussianBumps, MetricHamiltonian};
use conj_atlas::shooting::{solve, SolveOptions};
use conj_atlas::singularity::{classify, ClassifyOptions, EmbeddedNormalForm, NormalForm, SingularityType};
use conj_atlas::symmetry::{two_scaling_system, verify_invariance, ScalingAction};
use conj_atlas::{HamiltonianModel, PhasePoint};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn point(n: usize) -> impl Strategy<Value = PhasePoint> {
    (prop::collection::vec(-2.0..2.0f64, n), prop::collection::vec(-1.0..1.0f64, n))
        .prop_map(|(x, y)| PhasePoint::from_slices(&x, &y).unwrap())
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn midpoint_tangent_flow_is_symplectic(z in point(2)) {
        let bump = make_surface_graph_metric(GaussianBumps::single(2, 1.0, 1.0));
        let st = flow_with_tangent(&bump, &z, 0.5, &IntegratorSpec::midpoint(1e-2)).unwrap();
        prop_assert!(flow_symplecticity_defect(&bump, &z, &st.j) <= 1e-9);
    }

    #[test]
    fn midpoint_conserves_quadratic_energy(z in point(3)) {
        let flat = MetricHamiltonian::flat(3);
        let end = flow(&flat, &z, 2.0, &IntegratorSpec::midpoint(0.1)).unwrap();
        prop_assert!((flat.energy(&end.x, &end.y) - flat.energy(&z.x, &z.y)).abs() <= 1e-13);
        prop_assert!((&end.x - (&z.x + &z.y * 2.0)).norm() <= 1e-12);
    }

    #[test]
    fn flat_rescaling_is_exact(z in point(2), theta in 0.2..5.0f64) {
        let flat = MetricHamiltonian::flat(2);
        prop_assert!(rescaling_residual(&flat, &z, theta, 0.7, &IntegratorSpec::midpoint(0.05)).unwrap() <= 1e-12);
    }

    #[test]
    fn momentum_scaling_preserves_geodesic_hamiltonians(z in point(2)) {
        let bump = make_surface_graph_metric(GaussianBumps::single(2, 0.7, 0.8));
        let action = ScalingAction::momentum_scaling(2, 2.0);
        prop_assert!(verify_invariance(&action, &bump, &[z]).unwrap() <= 1e-12);
    }

    #[test]
    fn two_scaling_polynomial_is_invariant(z in point(3), beta in -2.0..2.0f64, gamma in -2.0..2.0f64) {
        let (model, action) = two_scaling_system(beta, gamma).unwrap();
        prop_assert!(verify_invariance(&action, &model, &[z]).unwrap() <= 1e-11);
    }

    #[test]
    fn scaling_factors_are_multiplicative(l in 0.1..10.0f64, m in 0.1..10.0f64, a in -2.0..2.0f64, c in -2.0..2.0f64) {
        let action = ScalingAction::new(vec![vec![a, 0.5]], c, 2.0).unwrap();
        prop_assert!((action.theta(l * m) - action.theta(l) * action.theta(m)).abs() <= 1e-12 * action.theta(l * m));
        prop_assert!((action.eta(l * m) - action.eta(l) * action.eta(m)).abs() <= 1e-12 * action.eta(l * m));
    }

    #[test]
    fn random_planes_are_lagrangian(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane = random_lagrangian_plane(&mut rng, n);
        prop_assert!(plane.lagrangian_defect() <= 1e-12);
        let (base, frame) = plane.parametrize().unwrap();
        prop_assert!(frame_isotropy_defect(&frame) <= 1e-12);
        prop_assert!(plane.evaluate(&base).amax() <= 1e-12);
    }

    #[test]
    fn flat_dirichlet_solution_is_the_straight_line(
        a in prop::collection::vec(-3.0..3.0f64, 2),
        b in prop::collection::vec(-3.0..3.0f64, 2),
    ) {
        let flat = MetricHamiltonian::flat(2);
        let bvp = LagrangianBvp::new(&flat, dirichlet(&a, &b).unwrap(), IntegratorSpec::midpoint(0.1)).unwrap();
        let sol = solve(&bvp, &DVector::zeros(2), &SolveOptions::default()).unwrap();
        prop_assert!(sol.converged);
        prop_assert_eq!(sol.degeneracy, 0);
        let expected = DVector::from_vec(vec![b[0] - a[0], b[1] - a[1]]);
        prop_assert!((&sol.z.y - expected).norm() <= 1e-9);
    }

    #[test]
    fn flat_rays_have_no_conjugate_points(s in 0.0..std::f64::consts::TAU) {
        let flat = MetricHamiltonian::flat(2);
        let fan = RayFan::new(&flat, &DVector::zeros(2), IntegratorSpec::midpoint(0.5)).unwrap();
        let w = direction_from_angles(&[s]).unwrap();
        prop_assert!(fan.first_conjugate(&w, 20.0, None).unwrap().is_none());
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn classifier_never_mislabels(seed in any::<u64>(), form in 0usize..5) {
        let form = [NormalForm::A2, NormalForm::A3, NormalForm::A4, NormalForm::D4Minus, NormalForm::D4Plus][form];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedded = EmbeddedNormalForm::random(form, form.core_dim() + 1, &mut rng);
        let report = classify(&embedded, &embedded.solution(), &ClassifyOptions::default()).unwrap();
        prop_assert_eq!(report.degeneracy, form.core_dim());
        prop_assert!(report.kind == form.expected() || report.kind == SingularityType::Unresolved, "{:?}", report.kind);
    }
}
