use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::phase::{
    make_ellipsoid_constrained, make_surface_graph_metric, GaussianBumps, MetricHamiltonian, Monomial,
    PolynomialHamiltonian,
};

fn v(s: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(s)
}

fn sphere() -> crate::phase::EllipsoidModel {
    let r = 1.0 / PI;
    make_ellipsoid_constrained(&[r, r, r]).unwrap().0
}

fn sphere_start() -> PhasePoint {
    PhasePoint::from_slices(&[-1.0 / PI, 0.0, 0.0], &[0.0, 0.6, 0.8]).unwrap()
}

fn gaussian(n: usize) -> MetricHamiltonian {
    make_surface_graph_metric(GaussianBumps::single(n, 1.0, 1.0))
}

#[test]
fn flat_flow_is_exact() {
    let m = MetricHamiltonian::flat(2);
    let z0 = PhasePoint::from_slices(&[0.3, -1.0], &[0.7, 2.0]).unwrap();
    let st = flow_with_tangent(&m, &z0, 1.0, &IntegratorSpec::midpoint(1e-2)).unwrap();
    assert!((&st.z.x - v(&[1.0, 1.0])).amax() < 1e-13);
    assert!((&st.z.y - &z0.y).amax() < 1e-15);
    let mut expect = DMatrix::identity(4, 4);
    expect[(0, 2)] = 1.0;
    expect[(1, 3)] = 1.0;
    assert!((st.j - expect).amax() < 1e-12);
}

#[test]
fn sphere_reaches_antipode() {
    // RATTLE advances a great circle of angular speed ω with phase error
    // ω³h²t/6, so at t = 1 the endpoint lags the antipode by π²h²/6 along
    // the circle.
    for h in [1e-3, 5e-4] {
        let st = flow(&sphere(), &sphere_start(), 1.0, &IntegratorSpec::rattle(h)).unwrap();
        let err = (&st.x - v(&[1.0 / PI, 0.0, 0.0])).norm();
        let predicted = PI * PI * h * h / 6.0;
        assert!((err / predicted - 1.0).abs() < 0.02, "h = {h}: {err} vs {predicted}");
    }
    let rk = flow(&sphere(), &sphere_start(), 1.0, &IntegratorSpec::reference(1e-12)).unwrap();
    assert!((&rk.x - v(&[1.0 / PI, 0.0, 0.0])).norm() < 1e-9);
}

#[test]
fn sphere_transverse_block_is_singular_at_antipode() {
    let model = sphere();
    let z0 = sphere_start();
    let e = v(&[0.0, 0.8, -0.6]);
    let mut seed = DMatrix::zeros(6, 1);
    seed.view_mut((3, 0), (3, 1)).copy_from(&e);
    let out = integrate(&model, &z0, 1.0, &IntegratorSpec::rattle(1e-3), Some(&seed)).unwrap();
    let dq = out.variations.unwrap().rows(0, 3).into_owned();
    let n = out.z.x.normalize();
    let p = out.z.y.normalize();
    let tangential = &dq - &n * n.dot(&dq) - &p * p.dot(&dq);
    assert!(tangential.norm() <= 1e-5, "{}", tangential.norm());
}

#[test]
fn gaussian_flow_matches_reference() {
    let model = gaussian(2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let z0 = PhasePoint::new(
            DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)),
            DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
        )
        .unwrap();
        let a = flow(&model, &z0, 1.0, &IntegratorSpec::midpoint(1e-3)).unwrap();
        let b = flow(&model, &z0, 1.0, &IntegratorSpec::reference(1e-9)).unwrap();
        assert!(a.distance(&b) < 1e-6, "{}", a.distance(&b));
    }
}

#[test]
fn tangent_flows_are_symplectic() {
    let spec = IntegratorSpec::midpoint(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let poly = PolynomialHamiltonian::new(
        3,
        vec![
            Monomial::new(0.5, vec![0, 0, 0], vec![2, 0, 0]),
            Monomial::new(1.0, vec![0, 0, 0], vec![1, 1, 1]),
            Monomial::new(0.2, vec![0, 2, 2], vec![0, 0, 0]),
        ],
    )
    .unwrap();
    let models: Vec<Box<dyn HamiltonianModel>> =
        vec![Box::new(MetricHamiltonian::flat(2)), Box::new(gaussian(2)), Box::new(gaussian(3)), Box::new(poly)];
    for m in &models {
        let n = m.dim();
        let z0 = PhasePoint::new(
            DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5)),
        )
        .unwrap();
        let st = flow_with_tangent(m.as_ref(), &z0, 1.0, &spec).unwrap();
        assert!(symplecticity_defect(&st.j) <= 1e-8, "{}", m.name());
    }
    let s = sphere();
    let st = flow_with_tangent(&s, &sphere_start(), 1.0, &IntegratorSpec::rattle(1e-3)).unwrap();
    let d = flow_symplecticity_defect(&s, &sphere_start(), &st.j);
    assert!(d <= 1e-8, "{d}");
}

#[test]
fn tangent_matches_finite_differences_of_discrete_map() {
    let model = gaussian(2);
    let spec = IntegratorSpec::midpoint(1e-2);
    let z0 = PhasePoint::from_slices(&[-1.0, 0.3], &[0.8, 0.1]).unwrap();
    let st = flow_with_tangent(&model, &z0, 1.0, &spec).unwrap();
    let base = z0.to_vector();
    for k in 0..4 {
        let eps = 1e-6;
        let mut zp = base.clone();
        let mut zm = base.clone();
        zp[k] += eps;
        zm[k] -= eps;
        let fp = flow(&model, &PhasePoint::from_vector(&zp), 1.0, &spec).unwrap().to_vector();
        let fm = flow(&model, &PhasePoint::from_vector(&zm), 1.0, &spec).unwrap().to_vector();
        let col = (fp - fm) / (2.0 * eps);
        assert!((col - st.j.column(k)).amax() < 1e-7);
    }
}

#[test]
fn rattle_tangent_matches_finite_differences() {
    let (model, c) = make_ellipsoid_constrained(&[1.05, 1.0, 0.95]).unwrap();
    let spec = IntegratorSpec::rattle(1e-2);
    let q0 = c.project_position(&v(&[0.5, 0.6, 0.5])).unwrap();
    let z0 = PhasePoint::new(q0.clone(), c.project_momentum(&q0, &v(&[0.2, -0.7, 0.4]))).unwrap();
    let basis = constrained_tangent_basis(&c, &z0);
    let out = integrate(&model, &z0, 1.5, &spec, Some(&basis)).unwrap();
    let vars = out.variations.unwrap();
    for k in 0..basis.ncols() {
        // Move along the constraint manifold to second order via projection.
        let eps = 1e-6;
        let shifted = |s: f64| {
            let q = c.project_position(&(&z0.x + basis.column(k).rows(0, 3) * s)).unwrap();
            let p = c.project_momentum(&q, &(&z0.y + basis.column(k).rows(3, 3) * s));
            PhasePoint::new(q, p).unwrap()
        };
        let fp = flow(&model, &shifted(eps), 1.5, &spec).unwrap().to_vector();
        let fm = flow(&model, &shifted(-eps), 1.5, &spec).unwrap().to_vector();
        let col = (fp - fm) / (2.0 * eps);
        assert!((col - vars.column(k)).amax() < 1e-6, "column {k}");
    }
}

#[test]
fn rescaling_residual_behaviour() {
    let s = sphere();
    let z0 = sphere_start();
    assert_eq!(rescaling_residual(&s, &z0, 1.0, 0.5, &IntegratorSpec::rattle(1e-3)).unwrap(), 0.0);
    let r = rescaling_residual(&s, &z0, 2.0, 0.5, &IntegratorSpec::reference(1e-12)).unwrap();
    assert!(r <= 1e-6, "{r}");
    let r1 = rescaling_residual(&s, &z0, 2.0, 0.5, &IntegratorSpec::rattle(1e-3)).unwrap();
    let r2 = rescaling_residual(&s, &z0, 2.0, 0.5, &IntegratorSpec::rattle(5e-4)).unwrap();
    assert!((r1 / r2 - 4.0).abs() < 0.2, "{r1} {r2}");
    let flat = MetricHamiltonian::flat(3);
    let zf = PhasePoint::from_slices(&[0.1, 0.2, 0.3], &[1.0, -2.0, 0.5]).unwrap();
    for theta in [0.5, 3.0] {
        assert!(rescaling_residual(&flat, &zf, theta, 0.7, &IntegratorSpec::midpoint(1e-2)).unwrap() < 1e-13);
    }
}

#[test]
fn sphere_energy_drift_is_bounded() {
    let s = sphere();
    let z0 = sphere_start();
    let spec = IntegratorSpec::rattle(1e-2);
    let traj = trajectory(&s, &z0, 10.0, &spec).unwrap();
    let h0 = s.energy(&z0.x, &z0.y);
    let worst = traj.iter().map(|(_, z)| (s.energy(&z.x, &z.y) - h0).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-4 * h0, "{worst}");
    assert_eq!(traj.len(), 1001);
}

#[test]
fn second_order_convergence() {
    let model = gaussian(2);
    let z0 = PhasePoint::from_slices(&[-1.5, 0.4], &[1.0, -0.2]).unwrap();
    let exact = flow(&model, &z0, 1.0, &IntegratorSpec::reference(1e-13)).unwrap();
    let e1 = flow(&model, &z0, 1.0, &IntegratorSpec::midpoint(2e-2)).unwrap().distance(&exact);
    let e2 = flow(&model, &z0, 1.0, &IntegratorSpec::midpoint(1e-2)).unwrap().distance(&exact);
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() <= 0.8, "{ratio}");
}

#[test]
fn group_property() {
    let model = gaussian(2);
    let spec = IntegratorSpec::midpoint(1e-2);
    let z0 = PhasePoint::from_slices(&[-1.0, 0.2], &[1.0, 0.3]).unwrap();
    let whole = flow(&model, &z0, 0.7, &spec).unwrap();
    let split = flow(&model, &flow(&model, &z0, 0.3, &spec).unwrap(), 0.4, &spec).unwrap();
    assert!(whole.distance(&split) < 1e-12);
}

#[test]
fn input_errors() {
    let s = sphere();
    let bad = PhasePoint::from_slices(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
    assert!(matches!(flow(&s, &bad, 1.0, &IntegratorSpec::rattle(1e-3)), Err(Error::InvalidInput(_))));
    assert!(matches!(flow(&s, &sphere_start(), 1.0, &IntegratorSpec::midpoint(1e-3)), Err(Error::InvalidInput(_))));
    let flat = MetricHamiltonian::flat(2);
    let z = PhasePoint::from_slices(&[0.0; 2], &[1.0, 0.0]).unwrap();
    assert!(flow(&flat, &z, 1.0, &IntegratorSpec::midpoint(0.0)).is_err());
    assert!(matches!(
        flow(&flat, &PhasePoint::from_slices(&[0.0; 3], &[0.0; 3]).unwrap(), 1.0, &IntegratorSpec::midpoint(1e-2)),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn newton_failure_reports_step() {
    let model = gaussian(2);
    let spec = IntegratorSpec { newton_max_iter: 1, newton_tol: 1e-15, ..IntegratorSpec::midpoint(0.5) };
    let z0 = PhasePoint::from_slices(&[-0.5, 0.2], &[2.0, 0.3]).unwrap();
    match flow(&model, &z0, 1.0, &spec) {
        Err(Error::IntegrationFailure { step, .. }) => assert_eq!(step, 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn partial_final_step_and_csv() {
    assert_eq!(step_sizes(1.0, 1e-3).len(), 1000);
    let s = step_sizes(0.25, 0.1);
    assert_eq!(s.len(), 3);
    assert!((s[2] - 0.05).abs() < 1e-15);
    let flat = MetricHamiltonian::flat(1);
    let z = PhasePoint::from_slices(&[0.0], &[1.0]).unwrap();
    let traj = trajectory(&flat, &z, 0.25, &IntegratorSpec::midpoint(0.1)).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&flat, &traj, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,y1,H");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("2.50000000000e-1,2.50000000000e-1"));
}
