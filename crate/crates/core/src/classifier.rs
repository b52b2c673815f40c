//! K-min nearest-neighbor decision function and evaluation.
//!
//! The decision value of a query is the mean of its K smallest distances
//! to the negative class minus the mean of its K smallest distances to
//! the positive class; a negative value votes negative. The Lipschitz
//! diagnostics expose smoothness certificates of this decision function
//! derived from the model's metric norms.

use nalgebra::DVector;

use crate::distance::ModelParams;

/// A labeled dataset: one feature vector per instance, labels in {−1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub instances: Vec<DVector<f64>>,
    pub labels: Vec<i8>,
}

impl LabeledDataset {
    /// # Panics
    /// Panics on length mismatch, empty data, labels outside {−1, +1},
    /// inconsistent dimensions, or non-finite features.
    pub fn new(instances: Vec<DVector<f64>>, labels: Vec<i8>) -> Self {
        assert_eq!(instances.len(), labels.len(), "instances/labels length mismatch");
        assert!(!instances.is_empty(), "dataset must be non-empty");
        assert!(
            labels.iter().all(|&l| l == -1 || l == 1),
            "labels must be -1 or +1"
        );
        let d = instances[0].len();
        assert!(
            instances.iter().all(|x| x.len() == d),
            "inconsistent feature dimensions"
        );
        assert!(
            instances.iter().flat_map(|x| x.iter()).all(|v| v.is_finite()),
            "features must be finite"
        );
        Self { instances, labels }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances[0].len()
    }

    /// Indices of instances carrying `label`.
    pub fn class_indices(&self, label: i8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

/// Mean of the k smallest distances from `x` to the given class members.
///
/// When the class has fewer than `k` members, all of them are used and
/// the divisor shrinks accordingly. Distance ties break by ascending
/// training index, which the lexicographic sort on (distance, index)
/// provides.
fn k_min_mean(
    x: &DVector<f64>,
    trainset: &LabeledDataset,
    model: &ModelParams,
    label: i8,
    k: usize,
) -> f64 {
    let mut dists: Vec<(f64, usize)> = trainset
        .instances
        .iter()
        .zip(&trainset.labels)
        .enumerate()
        .filter(|(_, (_, &l))| l == label)
        .map(|(idx, (xi, _))| (model.distance(x, xi), idx))
        .collect();
    assert!(!dists.is_empty(), "class {label} has no training instances");
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances must be comparable"));
    let used = k.min(dists.len());
    let sum: f64 = dists[..used].iter().map(|(d, _)| d).sum();
    sum / used as f64
}

/// The decision value f(x): mean K-min distance to the negative class
/// minus mean K-min distance to the positive class.
///
/// # Panics
/// Panics if `k == 0` or either class is absent from the training set.
pub fn decision_value(
    x: &DVector<f64>,
    trainset: &LabeledDataset,
    model: &ModelParams,
    k: usize,
) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    k_min_mean(x, trainset, model, -1, k) - k_min_mean(x, trainset, model, 1, k)
}

/// Sign of the decision value; the exact tie f(x) = 0 goes to +1 so
/// results stay reproducible.
pub fn predict(x: &DVector<f64>, trainset: &LabeledDataset, model: &ModelParams, k: usize) -> i8 {
    if decision_value(x, trainset, model, k) < 0.0 {
        -1
    } else {
        1
    }
}

/// Fraction of test instances classified correctly.
pub fn evaluate(
    testset: &LabeledDataset,
    trainset: &LabeledDataset,
    model: &ModelParams,
    k: usize,
) -> f64 {
    assert!(!testset.is_empty(), "test set must be non-empty");
    let correct = testset
        .instances
        .iter()
        .zip(&testset.labels)
        .filter(|(x, &label)| predict(x, trainset, model, k) == label)
        .count();
    correct as f64 / testset.len() as f64
}

/// Smoothness certificates for the decision function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzDiagnostics {
    /// 2·(Σ_s ‖M(A_s)‖_F + ‖M(B)‖_F). Sound whenever every metric has
    /// λ_max ≥ 1 (there ‖M‖_F ≥ λ_max ≥ √λ_max).
    pub paper_bound: f64,
    /// 2·(Σ_s √λ_max(M(A_s)) + √λ_max(M(B))): the same certificate via
    /// operator norms, which can be the tighter of the two.
    pub spectral_bound: f64,
}

/// Both Lipschitz bounds for a model. K does not enter: the 1/K mean
/// cancels the K-fold sum.
pub fn lipschitz_diagnostics(model: &ModelParams) -> LipschitzDiagnostics {
    let frob: f64 = model.background_metric.frobenius_norm()
        + model
            .regions
            .iter()
            .map(|r| r.metric.frobenius_norm())
            .sum::<f64>();
    let spectral: f64 = model.background_metric.spectral_sqrt_norm()
        + model
            .regions
            .iter()
            .map(|r| r.metric.spectral_sqrt_norm())
            .sum::<f64>();
    LipschitzDiagnostics {
        paper_bound: 2.0 * frob,
        spectral_bound: 2.0 * spectral,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::Region;
    use crate::geometry::Ball;
    use crate::metrics::MetricMatrix;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn random_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.random_range(-scale..scale))
    }

    fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> MetricMatrix {
        let l = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        MetricMatrix::new(&l * l.transpose() + DMatrix::identity(d, d) * 0.3)
    }

    fn random_model(rng: &mut ChaCha8Rng, d: usize, regions: usize) -> ModelParams {
        ModelParams {
            background_metric: random_psd(rng, d),
            regions: (0..regions)
                .map(|_| Region {
                    ball: Ball::new(random_vector(rng, d, 2.0), rng.random_range(0.3..1.5)),
                    metric: random_psd(rng, d),
                })
                .collect(),
        }
    }

    fn two_gaussians(rng: &mut ChaCha8Rng, n_per_class: usize, gap: f64) -> LabeledDataset {
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n_per_class {
            instances.push(vec2(
                rng.random_range(-1.0..1.0) - gap,
                rng.random_range(-1.0..1.0),
            ));
            labels.push(-1);
            instances.push(vec2(
                rng.random_range(-1.0..1.0) + gap,
                rng.random_range(-1.0..1.0),
            ));
            labels.push(1);
        }
        LabeledDataset::new(instances, labels)
    }

    /// Brute-force oracle: sort every same-class distance, average the
    /// first k. Independent of the library's selection path.
    fn brute_force_decision(
        x: &DVector<f64>,
        trainset: &LabeledDataset,
        model: &ModelParams,
        k: usize,
    ) -> f64 {
        let class_mean = |label: i8| {
            let mut all: Vec<(f64, usize)> = trainset
                .instances
                .iter()
                .enumerate()
                .filter(|(i, _)| trainset.labels[*i] == label)
                .map(|(i, xi)| (model.distance(x, xi), i))
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let used = k.min(all.len());
            all[..used].iter().map(|(d, _)| d).sum::<f64>() / used as f64
        };
        class_mean(-1) - class_mean(1)
    }

    #[test]
    fn query_on_negative_instance_votes_negative() {
        let trainset = LabeledDataset::new(
            vec![vec2(0.0, 0.0), vec2(5.0, 0.0)],
            vec![-1, 1],
        );
        let model = ModelParams::identity(2);
        let f = decision_value(&vec2(0.0, 0.0), &trainset, &model, 1);
        assert_eq!(f, -5.0); // 0 - distance-to-positive
        assert_eq!(predict(&vec2(0.0, 0.0), &trainset, &model, 1), -1);
    }

    #[test]
    fn mirror_symmetric_query_ties_to_positive() {
        let trainset = LabeledDataset::new(
            vec![vec2(-1.0, 0.0), vec2(-2.0, 1.0), vec2(1.0, 0.0), vec2(2.0, 1.0)],
            vec![-1, -1, 1, 1],
        );
        let model = ModelParams::identity(2);
        let x = vec2(0.0, 0.7);
        let f = decision_value(&x, &trainset, &model, 2);
        assert_eq!(f, 0.0);
        assert_eq!(predict(&x, &trainset, &model, 2), 1);
    }

    #[test]
    fn planted_six_point_configuration() {
        // Hand-enumerable: distances from x = (0, 0) under the identity.
        let trainset = LabeledDataset::new(
            vec![
                vec2(1.0, 0.0),  // -1, dist 1
                vec2(0.0, 2.0),  // -1, dist 2
                vec2(4.0, 0.0),  // -1, dist 4
                vec2(0.0, 3.0),  // +1, dist 3
                vec2(5.0, 0.0),  // +1, dist 5
                vec2(0.0, 6.0),  // +1, dist 6
            ],
            vec![-1, -1, -1, 1, 1, 1],
        );
        let model = ModelParams::identity(2);
        let x = vec2(0.0, 0.0);
        let f = decision_value(&x, &trainset, &model, 2);
        // (1 + 2)/2 - (3 + 5)/2 = 1.5 - 4 = -2.5
        assert_eq!(f, -2.5);
        assert_eq!(f, brute_force_decision(&x, &trainset, &model, 2));
    }

    #[test]
    fn k_larger_than_class_uses_all_members() {
        let trainset = LabeledDataset::new(
            vec![vec2(0.0, 0.0), vec2(1.0, 0.0), vec2(3.0, 0.0)],
            vec![-1, -1, 1],
        );
        let model = ModelParams::identity(2);
        let x = vec2(0.0, 0.0);
        // K = 5: negatives average over both (0 and 1)/2, positive over 3/1.
        let f = decision_value(&x, &trainset, &model, 5);
        assert_eq!(f, 0.5 - 3.0);
    }

    #[test]
    fn evaluate_memorizes_separable_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let data = two_gaussians(&mut rng, 10, 3.0);
        let model = ModelParams::identity(2);
        assert_eq!(evaluate(&data, &data, &model, 1), 1.0);
    }

    #[test]
    fn label_flip_gives_complement_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let train = two_gaussians(&mut rng, 12, 0.4);
        let test = two_gaussians(&mut rng, 8, 0.4);
        let model = ModelParams::identity(2);
        let acc = evaluate(&test, &train, &model, 3);
        let flipped = LabeledDataset::new(
            test.instances.clone(),
            test.labels.iter().map(|&l| -l).collect(),
        );
        let flipped_acc = evaluate(&flipped, &train, &model, 3);
        assert!((acc + flipped_acc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn twenty_point_set_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = two_gaussians(&mut rng, 10, 0.8);
        let model = random_model(&mut rng, 2, 2);
        for _ in 0..30 {
            let x = random_vector(&mut rng, 2, 2.0);
            let got = decision_value(&x, &train, &model, 3);
            let oracle = brute_force_decision(&x, &train, &model, 3);
            assert_eq!(got, oracle, "decision differs from brute force");
        }
    }

    #[test]
    fn brute_force_equivalence_is_bitwise_for_small_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        for n_per in [3usize, 8, 15] {
            let train = two_gaussians(&mut rng, n_per, 0.5);
            let model = random_model(&mut rng, 2, 1);
            for k in [1usize, 2, 7, 40] {
                for _ in 0..10 {
                    let x = random_vector(&mut rng, 2, 2.0);
                    let got = decision_value(&x, &train, &model, k);
                    let oracle = brute_force_decision(&x, &train, &model, k);
                    assert!(
                        got.to_bits() == oracle.to_bits(),
                        "n={} k={k}: {got:?} vs {oracle:?}",
                        train.len()
                    );
                }
            }
        }
    }

    #[test]
    fn label_swap_negates_decision_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        let train = two_gaussians(&mut rng, 9, 0.6);
        let swapped = LabeledDataset::new(
            train.instances.clone(),
            train.labels.iter().map(|&l| -l).collect(),
        );
        let model = random_model(&mut rng, 2, 2);
        for _ in 0..20 {
            let x = random_vector(&mut rng, 2, 2.0);
            let f = decision_value(&x, &train, &model, 4);
            let g = decision_value(&x, &swapped, &model, 4);
            assert_eq!(f.to_bits(), (-g).to_bits());
        }
    }

    #[test]
    fn predictions_invariant_under_metric_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        let train = two_gaussians(&mut rng, 10, 0.3);
        for &c in &[0.1f64, 1.0, 2.5, 40.0] {
            let scaled = ModelParams {
                background_metric: MetricMatrix::new(DMatrix::identity(2, 2) * (c * c)),
                regions: vec![],
            };
            let reference = ModelParams::identity(2);
            for _ in 0..20 {
                let x = random_vector(&mut rng, 2, 2.0);
                assert_eq!(
                    predict(&x, &train, &scaled, 3),
                    predict(&x, &train, &reference, 3),
                    "scale {c}"
                );
            }
        }
    }

    #[test]
    fn lipschitz_bounds_for_simple_models() {
        let model = ModelParams::identity(4);
        let diag = lipschitz_diagnostics(&model);
        assert!((diag.paper_bound - 4.0).abs() < 1e-12); // 2·‖I_4‖_F = 2·2
        assert!((diag.spectral_bound - 2.0).abs() < 1e-12);

        let model = ModelParams {
            background_metric: MetricMatrix::new(DMatrix::identity(1, 1) * 4.0),
            regions: vec![],
        };
        let diag = lipschitz_diagnostics(&model);
        assert!((diag.spectral_bound - 4.0).abs() < 1e-12); // 2·√4
    }

    #[test]
    fn paper_bound_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(131);
        for _ in 0..10 {
            let model = random_model(&mut rng, 3, 3);
            let diag = lipschitz_diagnostics(&model);
            let mut acc = model.background_metric.frobenius_norm();
            for region in &model.regions {
                acc += region.metric.frobenius_norm();
            }
            assert!((diag.paper_bound - 2.0 * acc).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_ratio_stays_under_paper_bound() {
        // S = 0 with λ_max(M) >= 1: the regime where the Frobenius bound
        // provably dominates.
        let mut rng = ChaCha8Rng::seed_from_u64(137);
        let train = two_gaussians(&mut rng, 8, 0.5);
        let mut metric = random_psd(&mut rng, 2);
        let lmax = metric.spectral_sqrt_norm().powi(2);
        if lmax < 1.0 {
            metric = MetricMatrix::new(metric.as_matrix() * (1.5 / lmax));
        }
        let model = ModelParams {
            background_metric: metric,
            regions: vec![],
        };
        let bound = lipschitz_diagnostics(&model).paper_bound;
        for _ in 0..2000 {
            let x1 = random_vector(&mut rng, 2, 3.0);
            let x2 = random_vector(&mut rng, 2, 3.0);
            let gap = (&x1 - &x2).norm();
            if gap < 1e-9 {
                continue;
            }
            let f1 = decision_value(&x1, &train, &model, 3);
            let f2 = decision_value(&x2, &train, &model, 3);
            assert!(
                (f1 - f2).abs() / gap <= bound + 1e-9,
                "ratio {} exceeds bound {bound}",
                (f1 - f2).abs() / gap
            );
        }
    }

    #[test]
    #[should_panic(expected = "has no training instances")]
    fn missing_class_panics() {
        let trainset = LabeledDataset::new(vec![vec2(0.0, 0.0)], vec![1]);
        let model = ModelParams::identity(2);
        decision_value(&vec2(1.0, 1.0), &trainset, &model, 1);
    }
}
