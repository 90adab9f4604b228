use std::f64::consts::PI;

use nalgebra::DVector;

use super::*;
use crate::boundary::{dirichlet, ConstrainedDirichlet, LagrangianBvp};
use crate::flow::IntegratorSpec;
use crate::phase::{make_ellipsoid_constrained, MetricHamiltonian};

#[test]
fn flat_dirichlet_converges_in_one_step() {
    let flat = MetricHamiltonian::flat(2);
    let bvp = LagrangianBvp::new(&flat, dirichlet(&[0.0, 0.0], &[0.4, -1.3]).unwrap(), IntegratorSpec::midpoint(0.1))
        .unwrap();
    let s = solve(&bvp, &DVector::zeros(2), &SolveOptions::default()).unwrap();
    assert!(s.converged);
    assert_eq!(s.iterations, 1);
    assert!((&s.u - DVector::from_vec(vec![0.4, -1.3])).amax() < 1e-12);
    assert_eq!(s.degeneracy, 0);
}

#[test]
fn sphere_has_short_and_long_arcs() {
    let r = 1.0 / PI;
    let (model, _) = make_ellipsoid_constrained(&[r, r, r]).unwrap();
    let q = DVector::from_vec(vec![-r, 0.0, 0.0]);
    // Target at angle 0.6π from q along a great circle: arcs of length 0.6 and 1.4.
    let ang = 0.6 * PI;
    let target = DVector::from_vec(vec![-r * ang.cos(), r * ang.sin(), 0.0]);
    let bvp = ConstrainedDirichlet::new(&model, &q, &target, IntegratorSpec::rattle(1e-3), 1.0).unwrap();
    let plan = MultistartPlan { seed: 3, ..MultistartPlan::new(2, 1.9, 24) };
    let sols = multistart(&bvp, &plan, &SolveOptions::default()).unwrap();
    let mut speeds: Vec<f64> = sols.iter().filter(|s| plan.inside(&s.u)).map(|s| s.u.norm()).collect();
    speeds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(speeds.len(), 2, "{speeds:?}");
    // O(h²) phase error of RATTLE: about 5e-6 on the long arc at h = 1e-3.
    assert!((speeds[0] - 0.6).abs() < 2e-5 && (speeds[1] - 1.4).abs() < 2e-5, "{speeds:?}");
}

#[test]
fn halton_points_fill_the_ball() {
    assert_eq!(halton(1, 2), 0.5);
    assert_eq!(halton(3, 2), 0.75);
    assert!((halton(2, 3) - 2.0 / 3.0).abs() < 1e-15);
    let plan = MultistartPlan::new(3, 2.0, 50);
    let pts = plan.points();
    assert_eq!(pts.len(), 50);
    assert!(pts.iter().all(|p| plan.inside(p)));
    let other = MultistartPlan { seed: 7, ..plan.clone() };
    assert_ne!(pts[1], other.points()[1]);
}

#[test]
fn mu_grid_indexing() {
    let g = MuGrid::uniform(&[(0.0, 1.0, 3), (5.0, 6.0, 2)]);
    assert_eq!(g.len(), 6);
    assert_eq!(g.mu(4), vec![0.5, 6.0]);
    assert_eq!(g.cell(&g.index(5)), 5);
    let mut nb = g.neighbors(1);
    nb.sort();
    assert_eq!(nb, vec![0, 2, 4]);
}

#[test]
fn flat_sweep_has_one_solution_everywhere() {
    let flat = MetricHamiltonian::flat(1);
    let bvp = LagrangianBvp::new(&flat, dirichlet(&[0.0], &[0.0]).unwrap(), IntegratorSpec::midpoint(0.1)).unwrap();
    let grid = MuGrid::uniform(&[(-1.0, 1.0, 9)]);
    let res = sweep(&bvp, &grid, &MultistartPlan::new(1, 3.0, 5), &SolveOptions::default()).unwrap();
    assert!(res.cells.iter().all(|c| c.count == 1 && !c.fold));
    assert!(res.fold_edges.is_empty());
}

#[test]
fn solve_rejects_bad_input() {
    let flat = MetricHamiltonian::flat(2);
    let bvp = LagrangianBvp::new(&flat, dirichlet(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), IntegratorSpec::midpoint(0.1))
        .unwrap();
    assert!(solve(&bvp, &DVector::zeros(3), &SolveOptions::default()).is_err());
    let bad = SolveOptions { tol: 0.0, ..SolveOptions::default() };
    assert!(solve(&bvp, &DVector::zeros(2), &bad).is_err());
}
