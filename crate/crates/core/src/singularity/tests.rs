use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

#[test]
fn identity_is_regular() {
    let d = degeneracy(&DMatrix::identity(3, 3), 1e-6);
    assert_eq!(d.m, 0);
    assert_eq!(degeneracy(&DMatrix::zeros(2, 2), 1e-6).m, 2);
}

#[test]
fn constructed_rank_deficiency() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 2..=4 {
        let u = normal_forms_random_orthogonal(&mut rng, n);
        let v = normal_forms_random_orthogonal(&mut rng, n);
        let mut s = DVector::from_element(n, 1.0);
        s[n - 1] = 0.0;
        let dr = &u * DMatrix::from_diagonal(&s) * v.transpose();
        let d = degeneracy(&dr, 1e-6);
        assert_eq!(d.m, 1);
        let k = d.kernel.column(0);
        assert!((k.dot(&v.column(n - 1)).abs() - 1.0).abs() < 1e-12);
        for alpha in [1e-3, 1.0, 1e3] {
            assert_eq!(degeneracy(&(&dr * alpha), 1e-6).m, 1);
        }
    }
}

fn normal_forms_random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    use rand::Rng;
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
}

fn classify_form(form: NormalForm, n: usize, seed: u64) -> SingularityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = EmbeddedNormalForm::random(form, n, &mut rng);
    classify(&nf, &nf.solution(), &ClassifyOptions::default()).unwrap()
}

#[test]
fn normal_forms_are_classified() {
    let forms = [
        NormalForm::A2,
        NormalForm::A3,
        NormalForm::A4,
        NormalForm::A5,
        NormalForm::D4Minus,
        NormalForm::D4Plus,
    ];
    for form in forms {
        for seed in 0..20 {
            let n = 2 + (seed as usize % 2);
            let rep = classify_form(form, n, seed);
            assert_eq!(rep.degeneracy, form.core_dim());
            assert_eq!(rep.kind, form.expected(), "{form:?} seed {seed}: votes {:?}", rep.votes);
        }
    }
}

#[test]
fn unembedded_germs_and_derivatives() {
    let n = 1;
    let nf = EmbeddedNormalForm::new(
        NormalForm::A3,
        DMatrix::identity(n, n),
        DMatrix::identity(n, n),
        DVector::zeros(n),
        vec![],
    )
    .unwrap();
    let rep = classify(&nf, &nf.solution(), &ClassifyOptions::default()).unwrap();
    assert_eq!(rep.kind, SingularityType::A3);
    let d = rep.derivatives.unwrap();
    // c(s) = s³ up to the orientation of the singular vectors.
    assert!((d.c3.abs() - 6.0).abs() < 1e-6, "{d:?}");
    assert!(d.c2.abs() < 1e-6);
    let nf = EmbeddedNormalForm::new(
        NormalForm::D4Minus,
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        vec![],
    )
    .unwrap();
    let rep = classify(&nf, &nf.solution(), &ClassifyOptions::default()).unwrap();
    assert_eq!(rep.kind, SingularityType::D4Minus);
    assert!(rep.cubic_discriminant.unwrap() < 0.0);
}

#[test]
fn regular_point_is_a1_and_summary_serializes() {
    let nf = EmbeddedNormalForm::new(
        NormalForm::A2,
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        vec![1.0],
    )
    .unwrap();
    let mut sol = nf.solution();
    sol.u = DVector::from_vec(vec![0.5, 0.0]);
    let rep = classify(&nf, &sol, &ClassifyOptions::default()).unwrap();
    assert_eq!(rep.kind, SingularityType::A1);
    let json = serde_json::to_string(&rep.summary()).unwrap();
    assert!(json.contains("\"type\":\"A1\""));
    assert!(!json.contains("cubic_discriminant"));
}

#[test]
fn fold_coefficient_of_a2_germ() {
    let nf = EmbeddedNormalForm::new(
        NormalForm::A2,
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        vec![],
    )
    .unwrap();
    let v = DVector::from_element(1, 1.0);
    let a2 = fold_coefficient(&nf, &DVector::zeros(1), &v, &v, 1e-4).unwrap();
    assert!((a2 - 2.0).abs() < 1e-8);
}
