use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::phase::make_ellipsoid_constrained;
use crate::phase::MetricHamiltonian;

fn sphere() -> crate::phase::EllipsoidModel {
    let r = 1.0 / PI;
    make_ellipsoid_constrained(&[r, r, r]).unwrap().0
}

#[test]
fn flat_rays_have_no_conjugate_points() {
    let model = MetricHamiltonian::flat(2);
    let q = DVector::from_vec(vec![0.3, -0.2]);
    for k in 0..8 {
        let a = k as f64 * 0.7;
        let d = DVector::from_vec(vec![a.cos(), a.sin()]);
        let hit = first_conjugate_time(&model, &q, &d, 20.0, &IntegratorSpec::midpoint(1e-2)).unwrap();
        assert!(hit.is_none());
    }
}

#[test]
fn sphere_rays_meet_at_the_antipode() {
    let model = sphere();
    let q = DVector::from_vec(vec![-1.0 / PI, 0.0, 0.0]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::rattle(1e-3)).unwrap();
    for s in [0.0, 1.0, 2.5, 4.0] {
        let w = direction_from_angles(&[s]).unwrap();
        let cp = fan.first_conjugate(&w, 1.5, None).unwrap().expect("conjugate point");
        assert!((cp.t_star - 1.0).abs() < 1e-4, "t* = {}", cp.t_star);
        assert_eq!(cp.degeneracy, 1);
        assert!((&cp.end.x + &q).norm() < 1e-4);
        assert!(cp.radial_defect < 1e-5);
    }
}

#[test]
fn three_sphere_antipode_has_degeneracy_two() {
    let r = 1.0 / PI;
    let model = make_ellipsoid_constrained(&[r, r, r, r]).unwrap().0;
    let q = DVector::from_vec(vec![0.0, 0.0, 0.0, r]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::rattle(1e-3)).unwrap();
    let w = direction_from_angles(&[0.7, 1.9]).unwrap();
    let cp = fan.first_conjugate(&w, 1.5, None).unwrap().expect("conjugate point");
    assert!((cp.t_star - 1.0).abs() < 1e-4, "t* = {}", cp.t_star);
    assert_eq!(cp.degeneracy, 2);
}

#[test]
fn time_rescaled_ray_degenerates_at_scaled_time() {
    let model = sphere();
    let q = DVector::from_vec(vec![-1.0 / PI, 0.0, 0.0]);
    let t = first_conjugate_time(&model, &q, &DVector::from_vec(vec![0.0, 3.0, 4.0]), 2.0, &IntegratorSpec::rattle(1e-3))
        .unwrap()
        .unwrap();
    assert!((t.0 - 1.0).abs() < 1e-4);
}

#[test]
fn sphere_locus_collapses() {
    let model = sphere();
    let q = DVector::from_vec(vec![-1.0 / PI, 0.0, 0.0]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::rattle(1e-3)).unwrap();
    let opts = LocusOptions { resolution: 64, t_max: 1.5, refine_levels: 0, ..Default::default() };
    let curve = trace_locus(&fan, &opts).unwrap();
    assert_eq!(curve.missing, 0);
    assert!(curve.spread() <= 1e-4, "spread {}", curve.spread());
}

#[test]
fn rejects_bad_inputs() {
    let model = MetricHamiltonian::flat(2);
    let q = DVector::from_vec(vec![0.0, 0.0]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::midpoint(1e-2)).unwrap();
    assert!(fan.first_conjugate(&DVector::zeros(2), 1.0, None).is_err());
    assert!(fan.first_conjugate(&DVector::from_vec(vec![1.0, 0.0]), -1.0, None).is_err());
    let opts = LocusOptions { resolution: 16, ..Default::default() };
    assert!(trace_locus(&fan, &opts).is_err());
    assert!(RayFan::new(&MetricHamiltonian::flat(1), &DVector::zeros(1), IntegratorSpec::midpoint(1e-2)).is_err());
}

fn triaxial(q: &[f64]) -> (crate::phase::EllipsoidModel, DVector<f64>) {
    use crate::phase::ConstraintSet;
    let (model, c) = make_ellipsoid_constrained(&[1.05, 1.0, 0.95]).unwrap();
    let q = c.project_position(&DVector::from_column_slice(q)).unwrap();
    (model, q)
}

/// Dense time scan of det(T_Xᵀ dX/dy) along the ray, independent of the
/// transverse-block monitor, with bisection on the first sign change.
fn dense_scan_time(fan: &RayFan<'_>, w: &DVector<f64>, t_max: f64) -> Option<f64> {
    use crate::flow::integrate;
    let model = fan.model();
    let c = model.constraint().unwrap();
    let m = model.dim();
    let basis = fan.basis().clone();
    let mut v0 = DMatrix::zeros(2 * m, basis.ncols());
    v0.view_mut((m, 0), (m, basis.ncols())).copy_from(&basis);
    let z0 = crate::PhasePoint { x: fan.base().clone(), y: fan.momentum(w).unwrap() };
    // Triple product with the normal, continuous along the ray.
    let det = |z: &crate::PhasePoint, v: &DMatrix<f64>| {
        let g = c.jacobian(&z.x).row(0).transpose();
        let (a, b) = (v.column(0).rows(0, m).into_owned(), v.column(1).rows(0, m).into_owned());
        g.dot(&a.cross(&b))
    };
    let dt = 0.01;
    let (mut z, mut v, mut t) = (z0, v0, 0.0);
    let mut prev = f64::NAN;
    while t < t_max {
        let out = integrate(model, &z, dt, fan.spec(), Some(&v)).unwrap();
        let (z1, v1) = (out.z, out.variations.unwrap());
        let d1 = det(&z1, &v1);
        if t > 0.05 && prev * d1 < 0.0 {
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let o = integrate(model, &z, mid, fan.spec(), Some(&v)).unwrap();
                if det(&o.z, o.variations.as_ref().unwrap()) * prev > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(t + 0.5 * (lo + hi));
        }
        prev = d1;
        z = z1;
        v = v1;
        t += dt;
    }
    None
}

#[test]
fn conjugate_times_match_dense_scan() {
    let (model, q) = triaxial(&[0.5, 0.6, 0.62]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::rattle(1e-3)).unwrap();
    for k in 0..10 {
        let w = direction_from_angles(&[0.3 + 0.61 * k as f64]).unwrap();
        let cp = fan.first_conjugate(&w, 5.0, None).unwrap().expect("conjugate point");
        let oracle = dense_scan_time(&fan, &w, 5.0).expect("oracle");
        assert!((cp.t_star - oracle).abs() < 1e-6, "{} vs {oracle}", cp.t_star);
        assert_eq!(cp.degeneracy, 1);
        assert!(cp.radial_defect < 1e-5);
    }
}

#[test]
fn locus_is_symmetric_under_principal_reflection() {
    // q on the plane x₃ = 0; the reflection x₃ ↦ −x₃ maps rays to rays.
    let (model, q) = triaxial(&[0.6, 0.7, 0.0]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::rattle(1e-3)).unwrap();
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0]));
    for k in 0..10 {
        let w = direction_from_angles(&[0.2 + 0.63 * k as f64]).unwrap();
        let w_ref = fan.basis().transpose() * &r * fan.basis() * &w;
        let a = fan.first_conjugate(&w, 5.0, None).unwrap().unwrap();
        let b = fan.first_conjugate(&w_ref, 5.0, None).unwrap().unwrap();
        assert!((&r * &a.end.x - &b.end.x).norm() < 1e-4);
        assert!((a.t_star - b.t_star).abs() < 1e-6);
    }
}

#[test]
fn conjugate_time_scales_inversely_with_speed() {
    use crate::boundary::{dirichlet, LagrangianBvp, ResidualMap};
    use crate::phase::{make_surface_graph_metric, GaussianBumps};
    use rand::{Rng, SeedableRng};
    let model = make_surface_graph_metric(GaussianBumps::single(2, 1.0, 1.0));
    let q = DVector::from_vec(vec![-3.0, 0.0]);
    let spec = IntegratorSpec::midpoint(1e-2);
    let fan = RayFan::new(&model, &q, spec.clone()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let w = direction_from_angles(&[rng.gen_range(-0.1..0.1)]).unwrap();
        let theta = rng.gen_range(0.5..3.0);
        let cp = fan.first_conjugate(&w, 12.0, None).unwrap().unwrap_or_else(|| panic!("no conjugate point at {w}"));
        // det D_yX over time T for the momentum θ·p, by bisection.
        let y = &cp.momentum * theta;
        let det_at = |t: f64| {
            let b = dirichlet(q.as_slice(), q.as_slice()).unwrap();
            let bvp = LagrangianBvp::with_time(&model, b, spec.clone(), t).unwrap();
            let z = crate::PhasePoint { x: q.clone(), y: y.clone() };
            bvp.residual_and_jacobian(&bvp.coordinates(&z)).unwrap().1.determinant()
        };
        let guess = cp.t_star / theta;
        let (mut lo, mut hi) = (guess * 0.98, guess * 1.02);
        let dlo = det_at(lo);
        assert!(dlo * det_at(hi) < 0.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if det_at(mid) * dlo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - guess).abs() < 1e-4, "{} vs {guess}", 0.5 * (lo + hi));
    }
}

#[test]
fn gaussian_bump_locus_has_one_cusp_on_the_axis() {
    use crate::phase::{make_surface_graph_metric, GaussianBumps};
    let model = make_surface_graph_metric(GaussianBumps::single(2, 1.0, 1.0));
    let q = DVector::from_vec(vec![-3.0, 0.0]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::midpoint(1e-2)).unwrap();
    let opts = LocusOptions { resolution: 64, t_max: 12.0, s_range: (-0.8, 0.8), ..Default::default() };
    let curve = trace_locus(&fan, &opts).unwrap();
    assert!(!curve.closed);
    assert_eq!(curve.confirmed_cusps(), 1);
    let c = &curve.cusps[0];
    assert_eq!(c.kind, crate::singularity::SingularityType::A3);
    let x = &curve.points[c.index].endpoint;
    assert!(x[1].abs() < 1e-6 && (x[0] - 1.94).abs() < 0.01, "{x}");
}

#[test]
fn surface_locus_edge_cases() {
    let flat = MetricHamiltonian::flat(3);
    let q = DVector::zeros(3);
    let fan = RayFan::new(&flat, &q, IntegratorSpec::midpoint(0.1)).unwrap();
    let opts = SurfaceOptions { polar: 4, azimuth: 6, t_max: 5.0, ..Default::default() };
    let s = trace_locus_3d(&fan, &opts).unwrap();
    assert!(s.samples.is_empty() && s.candidates.is_empty());
    assert_eq!(s.missing, 24);

    let r = 1.0 / PI;
    let model = make_ellipsoid_constrained(&[r, r, r, r]).unwrap().0;
    let q = DVector::from_vec(vec![0.0, 0.0, 0.0, r]);
    let fan = RayFan::new(&model, &q, IntegratorSpec::rattle(2e-3)).unwrap();
    let opts = SurfaceOptions { polar: 4, azimuth: 6, t_max: 1.5, ridge_samples: 8, ..Default::default() };
    let s = trace_locus_3d(&fan, &opts).unwrap();
    assert!(s.samples.iter().all(|p| p.degeneracy == 2 && (p.t_star - 1.0).abs() < 1e-4));
    assert!(s.samples.iter().all(|p| (&p.endpoint + &q).norm() < 1e-4));

    let two = MetricHamiltonian::flat(2);
    let fan = RayFan::new(&two, &DVector::zeros(2), IntegratorSpec::midpoint(0.1)).unwrap();
    assert!(trace_locus_3d(&fan, &SurfaceOptions::default()).is_err());
}
