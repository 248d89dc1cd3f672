use iesis_core::dct::{analyze, reduce_dimension, DctBasis, Ordering};
use iesis_core::diagnostics::*;
use iesis_core::ensemble::{mc_cov_theta, systematic_indices, systematic_resample, Ensemble, WeightVector};
use iesis_core::gmm::GaussianMixture;
use iesis_core::oracle::{linear_gmm_posterior, quadrature_posterior, LinearModel, QuadratureGrid};
use iesis_core::postprocess::{project_block, FaciesScale, PostProcessSpec};
use iesis_core::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn dct_orthonormal_and_roundtrip() {
    for (nx, ny) in [(1, 1), (4, 7), (16, 16), (32, 32)] {
        let b = DctBasis::build(nx, ny, nx * ny, Ordering::Zigzag).unwrap();
        let gram = b.columns().transpose() * b.columns();
        assert!((gram - DMatrix::identity(nx * ny, nx * ny)).amax() < 1e-10);
        let mut rng = ChaCha20Rng::seed_from_u64(nx as u64);
        let field: Vec<f64> = (0..nx * ny).map(|_| rng.random::<f64>() - 0.5).collect();
        let back = b.synthesize(&b.project(&field).unwrap()).unwrap();
        let err = field.iter().zip(&back).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}

#[test]
fn separable_analysis_matches_basis_projection() {
    let (nx, ny) = (6, 9);
    let b = DctBasis::build(nx, ny, nx * ny, Ordering::Linear).unwrap();
    let field: Vec<f64> = (0..nx * ny).map(|k| ((k * 7) % 11) as f64).collect();
    let coeffs = analyze(&field, nx, ny).unwrap();
    let projected = b.project(&field).unwrap();
    for (c, &r) in projected.iter().zip(b.retained()) {
        assert!((c - coeffs[r]).abs() < 1e-10);
    }
}

#[test]
fn restricted_basis_keeps_chosen_columns() {
    let b = DctBasis::build(5, 5, 10, Ordering::Zigzag).unwrap();
    let r = b.restrict(&[0, 3, 7]).unwrap();
    assert_eq!(r.retained(), &[b.retained()[0], b.retained()[3], b.retained()[7]]);
    let again = DctBasis::with_columns(5, 5, r.retained().to_vec()).unwrap();
    assert_eq!(again.columns(), r.columns());
    assert!(DctBasis::with_columns(5, 5, vec![1, 1]).is_err());
}

proptest! {
    #[test]
    fn reduction_keeps_a_sorted_subset(
        theta in prop::collection::vec(-5.0f64..5.0, 1..40),
        alpha in 0.05f64..1.0,
    ) {
        prop_assume!(theta.iter().any(|v| v.abs() > 1e-6));
        let keep = reduce_dimension(&theta, alpha).unwrap();
        prop_assert!(!keep.is_empty());
        prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        let kept: f64 = keep.iter().map(|&i| theta[i].abs()).sum();
        let total: f64 = theta.iter().map(|v| v.abs()).sum();
        prop_assert!(kept >= alpha * total * (1.0 - 1e-12));
    }

    #[test]
    fn resampling_counts_are_floor_or_ceil(
        raw in prop::collection::vec(0.0f64..1.0, 2..60),
        u in 0.0f64..1.0,
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let n = raw.len();
        let idx = systematic_indices(&raw, n, u);
        let total: f64 = raw.iter().sum();
        let mut counts = vec![0usize; n];
        for i in idx {
            counts[i] += 1;
        }
        for (c, w) in counts.iter().zip(&raw) {
            let e = n as f64 * w / total;
            prop_assert!(*c as f64 >= e.floor() - 1e-9 && *c as f64 <= e.ceil() + 1e-9, "count {} expected {}", c, e);
        }
    }

    #[test]
    fn projection_minimizes_penalized_objective(
        a_tilde in -3.0f64..3.0,
        tau in 0.01f64..0.99,
        b in prop::array::uniform4(-2.0f64..2.0),
        lower in -2.0f64..0.0,
        width in 0.1f64..3.0,
    ) {
        let spec = PostProcessSpec { tau, b, lower, upper: lower + width };
        prop_assume!(spec.validate().is_ok());
        let best = project_block(a_tilde, &spec);
        let g = spec.objective(a_tilde, best);
        for k in 0..=200 {
            let a = lower + width * k as f64 / 200.0;
            prop_assert!(g <= spec.objective(a_tilde, a) + 1e-12);
        }
    }

    #[test]
    fn interval_summaries_are_ordered(values in prop::collection::vec(-1e3f64..1e3, 1..80)) {
        let s = IntervalSummary::from_sample(&values).unwrap();
        prop_assert!(s.is_ordered());
        let w: Vec<f64> = (0..values.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        prop_assert!(IntervalSummary::from_weighted(&values, &w).unwrap().is_ordered());
    }

    #[test]
    fn relative_error_is_rotation_invariant(
        t in prop::array::uniform2(-5.0f64..5.0),
        e in prop::array::uniform2(-5.0f64..5.0),
        angle in 0.0f64..6.3,
    ) {
        prop_assume!(t[0].abs() + t[1].abs() > 1e-3);
        let (c, s) = (angle.cos(), angle.sin());
        let rot = |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let a = relative_error(&e, &t).unwrap();
        let b = relative_error(&rot(e), &rot(t)).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
    }
}

#[test]
fn resampling_preserves_weighted_mean_on_average() {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let n = 40;
    let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
    let ens = Ensemble::new(DMatrix::from_row_slice(1, n, &values)).unwrap();
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    let delta: Vec<f64> = raw.iter().map(|w| (w / total).ln()).collect();
    let w = iesis_core::ensemble::normalize_weights(&delta, 1.0).unwrap();
    let target: f64 = values.iter().zip(w.values()).map(|(v, p)| v * p).sum();
    let means: Vec<f64> = (0..200)
        .map(|s| {
            let mut r = ChaCha20Rng::seed_from_u64(1000 + s);
            systematic_resample(&ens, &w, &mut r).unwrap().0.mean()[0]
        })
        .collect();
    let avg = means.iter().sum::<f64>() / 200.0;
    let sd = (means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / 199.0).sqrt();
    assert!((avg - target).abs() <= 3.0 * sd / 200f64.sqrt() + 1e-12);
}

#[test]
fn uniform_weights_resample_to_identity() {
    let ens = Ensemble::new(DMatrix::from_fn(2, 10, |i, j| (i * 10 + j) as f64)).unwrap();
    let (out, idx) = systematic_resample(&ens, &WeightVector::uniform(10), &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
    assert_eq!(idx, (0..10).collect::<Vec<_>>());
    assert_eq!(out.samples(), ens.samples());
}

#[test]
fn covariance_is_affine_equivariant() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(3, 30, |_, _| rng.random::<f64>());
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
    let shifted = {
        let mut y = &a * &x;
        for mut c in y.column_iter_mut() {
            c += DVector::from_vec(vec![5.0, -2.0]);
        }
        y
    };
    let cx = mc_cov_theta(&Ensemble::new(x).unwrap());
    let cy = mc_cov_theta(&Ensemble::new(shifted).unwrap());
    assert!((cy - &a * cx * a.transpose()).amax() < 1e-12);
}

fn two_component_problem() -> (LinearModel, DVector<f64>, GaussianMixture) {
    let model = LinearModel::new(DMatrix::from_element(1, 1, 1.5), DMatrix::from_element(1, 1, 0.8)).unwrap();
    let prior = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![DVector::from_element(1, -2.0), DVector::from_element(1, 1.5)],
        vec![DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 2.0)],
    )
    .unwrap();
    (model, DVector::from_element(1, 0.4), prior)
}

#[test]
fn closed_form_posterior_matches_quadrature() {
    let (model, d, prior) = two_component_problem();
    let post = linear_gmm_posterior(&model, &d, &prior).unwrap();
    let grid = QuadratureGrid {
        lower: vec![-10.0],
        upper: vec![10.0],
        points: vec![20001],
    };
    let q = quadrature_posterior(&model, &d, &prior, &grid).unwrap();
    assert_eq!(q.density.len(), 20001);
    assert!((q.mass() - 1.0).abs() < 1e-12);
    let sup = q
        .points()
        .iter()
        .zip(&q.density)
        .map(|(p, v)| (post.log_pdf(p).unwrap().exp() - v).abs())
        .fold(0.0, f64::max);
    assert!(sup < 1e-3, "{sup}");
}

#[test]
fn literal_determinant_exponent_disagrees_with_quadrature() {
    // A weight carrying det(Σᵃ)^(-1/2) is wrong; completing the square
    // gives the positive power. With unequal component covariances the two
    // differ visibly.
    let (model, d, prior) = two_component_problem();
    let post = linear_gmm_posterior(&model, &d, &prior).unwrap();
    let g = model.g()[(0, 0)];
    let cd = model.c_d()[(0, 0)];
    let literal: Vec<f64> = (0..2)
        .map(|i| {
            let (mu, s) = (prior.means()[i][0], prior.covariances()[i][(0, 0)]);
            let sa = 1.0 / (g * g / cd + 1.0 / s);
            let ma = sa * (g * d[0] / cd + mu / s);
            prior.weights()[i] * sa.powf(-0.5) * (-0.5 * (d[0] * d[0] / cd + mu * mu / s - ma * ma / sa)).exp()
                / (s.sqrt() * cd.sqrt())
        })
        .collect();
    let corrected: Vec<f64> = (0..2)
        .map(|i| {
            let s = prior.covariances()[i][(0, 0)];
            let sa = 1.0 / (g * g / cd + 1.0 / s);
            literal[i] * sa
        })
        .collect();
    let lit_norm = literal[0] / (literal[0] + literal[1]);
    let cor_norm = corrected[0] / (corrected[0] + corrected[1]);
    assert!((cor_norm - post.weights()[0]).abs() < 1e-12);
    assert!((lit_norm - post.weights()[0]).abs() > 0.01);
}

#[test]
fn prediction_interval_widens_by_noise() {
    let preds = DMatrix::from_element(2, 400, 3.0);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let iv = prediction_intervals(&preds, 0.5, 50, &mut rng).unwrap();
    for s in iv {
        assert_eq!(s.credible.lower95, 3.0);
        assert_eq!(s.credible.upper95, 3.0);
        assert!((s.prediction.upper95 - (3.0 + 1.96 * 0.5)).abs() < 0.03);
        assert!((s.prediction.lower95 - (3.0 - 1.96 * 0.5)).abs() < 0.03);
    }
    let tight = prediction_intervals(&DMatrix::from_fn(1, 100, |_, j| j as f64), 0.0, 1, &mut rng).unwrap();
    assert_eq!(tight[0].credible, tight[0].prediction);
}

#[test]
fn facies_scale_roundtrip() {
    let s = FaciesScale::new(2.0, 6.0).unwrap();
    for v in [2.0, 3.5, 6.0] {
        assert!((s.from_unit(s.to_unit(v)) - v).abs() < 1e-14);
    }
}
