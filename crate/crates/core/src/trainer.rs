//! Joint training of metrics, region centers and radii.
//!
//! Targets are fixed once per run: each instance is linked to its K
//! nearest same-class neighbors (similar pairs, pulled inside the margin
//! `1 − C`) and its K nearest different-class neighbors (dissimilar
//! pairs, pushed beyond `1 + C`), under Euclidean distance on the
//! preprocessed features. The objective is
//!
//! ```text
//! g = (1/N1) Σ [D(x_i, x_j) − (1 − C)]₊
//!   + (1/N2) Σ [(1 + C) − D(x_m, x_n)]₊
//!   + α Σ_s ‖M(A_s)‖_F + α ‖M(B)‖_F
//! ```
//!
//! minimized by full-batch gradient descent; after every step each
//! metric is symmetrized and projected back onto the PSD cone and each
//! radius is clamped to the configured floor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::LabeledDataset;
use crate::distance::{DistanceGradients, ModelParams, Region, RegionGradients};
use crate::geometry::Ball;
use crate::kmeans::kmeans;
use crate::metrics::MetricMatrix;

/// Fixed target pairs. `similar` holds (i, j) with x_j among x_i's K
/// nearest same-class neighbors; `dissimilar` holds (m, n) with x_m
/// among x_n's K nearest different-class neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    pub similar: Vec<(usize, usize)>,
    pub dissimilar: Vec<(usize, usize)>,
}

impl PairSet {
    pub fn n1(&self) -> usize {
        self.similar.len()
    }

    pub fn n2(&self) -> usize {
        self.dissimilar.len()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Regularization weight on the metric Frobenius norms.
    pub alpha: f64,
    /// Margin constant C in [0, 1).
    pub margin_c: f64,
    /// Neighbor count for target pairs and the classifier.
    pub k_neighbors: usize,
    /// Number of regions S.
    pub num_regions: usize,
    /// Gradient-descent step size.
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Relative objective-change tolerance over a 10-epoch window.
    pub tol: f64,
    pub seed: u64,
    /// Radii never drop below this.
    pub radius_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            margin_c: 0.5,
            k_neighbors: 10,
            num_regions: 4,
            learning_rate: 0.01,
            max_epochs: 200,
            tol: 1e-5,
            seed: 0,
            radius_floor: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(TrainError::InvalidConfig("alpha must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.margin_c) {
            return Err(TrainError::InvalidConfig("margin C must be in [0, 1)".into()));
        }
        if self.k_neighbors == 0 {
            return Err(TrainError::InvalidConfig("k must be >= 1".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig("learning rate must be >= 0".into()));
        }
        if !(self.radius_floor > 0.0) {
            return Err(TrainError::InvalidConfig("radius floor must be > 0".into()));
        }
        if self.tol < 0.0 {
            return Err(TrainError::InvalidConfig("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective became non-finite at epoch {epoch} (step size too large?)")]
    NonFiniteObjective { epoch: usize },
    #[error("model invariant violated at epoch {epoch}: {message}")]
    InvariantViolated { epoch: usize, message: String },
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Objective value before any step, then after each epoch.
    pub objective_history: Vec<f64>,
    pub final_model: ModelParams,
    pub epochs_run: usize,
}

/// Indices of a class's instances sorted by Euclidean distance from
/// `x`, ties broken by ascending index.
fn sorted_neighbors(
    trainset: &LabeledDataset,
    x: usize,
    same_class: bool,
) -> Vec<usize> {
    let label = trainset.labels[x];
    let mut cands: Vec<(f64, usize)> = (0..trainset.len())
        .filter(|&j| j != x && (trainset.labels[j] == label) == same_class)
        .map(|j| {
            (
                (&trainset.instances[x] - &trainset.instances[j]).norm(),
                j,
            )
        })
        .collect();
    cands.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    cands.into_iter().map(|(_, j)| j).collect()
}

/// Builds the fixed target pairs under Euclidean distance.
///
/// # Panics
/// Panics if a class is absent from the training set.
pub fn build_target_pairs(trainset: &LabeledDataset, k: usize) -> PairSet {
    assert!(
        !trainset.class_indices(-1).is_empty() && !trainset.class_indices(1).is_empty(),
        "both classes must be present to build target pairs"
    );
    let mut similar = Vec::new();
    let mut dissimilar = Vec::new();
    for i in 0..trainset.len() {
        for &j in sorted_neighbors(trainset, i, true).iter().take(k) {
            similar.push((i, j));
        }
        for &m in sorted_neighbors(trainset, i, false).iter().take(k) {
            dissimilar.push((m, i));
        }
    }
    PairSet { similar, dissimilar }
}

/// Per-instance discriminative direction: for each feature, the total
/// absolute offset to the K nearest different-class neighbors minus the
/// same for the K nearest same-class neighbors. Large positive entries
/// mark features along which the classes separate locally.
pub fn discriminative_direction(trainset: &LabeledDataset, k: usize) -> Vec<DVector<f64>> {
    let d = trainset.dim();
    (0..trainset.len())
        .map(|i| {
            let mut h = DVector::zeros(d);
            let xi = &trainset.instances[i];
            for &m in sorted_neighbors(trainset, i, false).iter().take(k) {
                for f in 0..d {
                    h[f] += (trainset.instances[m][f] - xi[f]).abs();
                }
            }
            for &j in sorted_neighbors(trainset, i, true).iter().take(k) {
                for f in 0..d {
                    h[f] -= (trainset.instances[j][f] - xi[f]).abs();
                }
            }
            h
        })
        .collect()
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let rank = (p * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// Heuristic initializer:
/// 1. compute the discriminative direction h(x) per instance,
/// 2. cluster the augmented features [x, h(x)] into S groups
///    (k-means++, re-seeded up to 10 times if a cluster comes out
///    empty; still-empty clusters are dropped),
/// 3. center each region at the mean of its members' original features,
///    set the radius to the 80th percentile of member distances from
///    the center, and start the local metric at
///    I + 0.1·diag(mean h over the cluster).
///
/// The background metric starts at the identity; every metric is
/// PSD-projected before being returned.
///
/// # Panics
/// Panics if `num_regions` exceeds the number of training instances.
pub fn initialize_model(trainset: &LabeledDataset, config: &TrainConfig) -> ModelParams {
    let d = trainset.dim();
    let s = config.num_regions;
    if s == 0 {
        return ModelParams::identity(d);
    }
    assert!(
        s <= trainset.len(),
        "num_regions ({s}) exceeds training set size ({})",
        trainset.len()
    );

    let h = discriminative_direction(trainset, config.k_neighbors);
    let augmented: Vec<DVector<f64>> = trainset
        .instances
        .iter()
        .zip(&h)
        .map(|(x, hx)| {
            let mut v = DVector::zeros(2 * d);
            v.rows_mut(0, d).copy_from(x);
            v.rows_mut(d, d).copy_from(hx);
            v
        })
        .collect();

    // Re-seed until every cluster is populated, then fall back to
    // dropping empty ones.
    let mut clustering = None;
    for attempt in 0..10u64 {
        let result = kmeans(&augmented, s, config.seed.wrapping_add(attempt), 100, 1e-6);
        let mut counts = vec![0usize; s];
        for &a in &result.assignments {
            counts[a] += 1;
        }
        let complete = counts.iter().all(|&c| c > 0);
        clustering = Some(result);
        if complete {
            break;
        }
    }
    let clustering = clustering.expect("at least one k-means attempt ran");

    let mut regions = Vec::new();
    for cluster in 0..s {
        let members: Vec<usize> = clustering
            .assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == cluster)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue; // dropped region
        }
        let mut center = DVector::zeros(d);
        for &i in &members {
            center += &trainset.instances[i];
        }
        center /= members.len() as f64;

        let mut dists: Vec<f64> = members
            .iter()
            .map(|&i| (&trainset.instances[i] - &center).norm())
            .collect();
        let radius = percentile(&mut dists, 0.8).max(config.radius_floor);

        let mut mean_h = DVector::zeros(d);
        for &i in &members {
            mean_h += &h[i];
        }
        mean_h /= members.len() as f64;
        let metric = MetricMatrix::new(
            DMatrix::identity(d, d) + DMatrix::from_diagonal(&(mean_h * 0.1)),
        )
        .project_psd(0.0);

        regions.push(Region {
            ball: Ball::new(center, radius),
            metric,
        });
    }

    ModelParams {
        background_metric: MetricMatrix::identity(d).project_psd(0.0),
        regions,
    }
}

fn hinge(z: f64) -> f64 {
    z.max(0.0)
}

/// The regularized hinge objective over the fixed pairs.
pub fn objective(
    model: &ModelParams,
    trainset: &LabeledDataset,
    pairs: &PairSet,
    config: &TrainConfig,
) -> f64 {
    let margin_lo = 1.0 - config.margin_c;
    let margin_hi = 1.0 + config.margin_c;
    let mut g = 0.0;
    if pairs.n1() > 0 {
        let sum: f64 = pairs
            .similar
            .iter()
            .map(|&(i, j)| hinge(model.distance(&trainset.instances[i], &trainset.instances[j]) - margin_lo))
            .sum();
        g += sum / pairs.n1() as f64;
    }
    if pairs.n2() > 0 {
        let sum: f64 = pairs
            .dissimilar
            .iter()
            .map(|&(m, n)| hinge(margin_hi - model.distance(&trainset.instances[m], &trainset.instances[n])))
            .sum();
        g += sum / pairs.n2() as f64;
    }
    g += config.alpha * model.background_metric.frobenius_norm();
    for region in &model.regions {
        g += config.alpha * region.metric.frobenius_norm();
    }
    g
}

fn zero_gradients(model: &ModelParams) -> DistanceGradients {
    let d = model.dim();
    DistanceGradients {
        background_metric: DMatrix::zeros(d, d),
        regions: model
            .regions
            .iter()
            .map(|_| RegionGradients {
                metric: DMatrix::zeros(d, d),
                center: DVector::zeros(d),
                radius: 0.0,
            })
            .collect(),
    }
}

fn accumulate(acc: &mut DistanceGradients, grads: &DistanceGradients, weight: f64) {
    acc.background_metric += &grads.background_metric * weight;
    for (a, g) in acc.regions.iter_mut().zip(&grads.regions) {
        a.metric += &g.metric * weight;
        a.center += &g.center * weight;
        a.radius += g.radius * weight;
    }
}

/// Full-batch gradient of [`objective`] with respect to every parameter.
///
/// Active similar pairs (distance above `1 − C`) push their distance
/// gradients with weight `+1/N1`; active dissimilar pairs (distance
/// below `1 + C`) enter with weight `−1/N2`, since growing those
/// distances shrinks their hinge. Each metric additionally receives the
/// Frobenius shrinkage `α·M/‖M‖_F` (skipped below norm 1e−12, where the
/// norm is not differentiable).
pub fn objective_gradient(
    model: &ModelParams,
    trainset: &LabeledDataset,
    pairs: &PairSet,
    config: &TrainConfig,
) -> DistanceGradients {
    let margin_lo = 1.0 - config.margin_c;
    let margin_hi = 1.0 + config.margin_c;
    let mut acc = zero_gradients(model);

    if pairs.n1() > 0 {
        let w = 1.0 / pairs.n1() as f64;
        for &(i, j) in &pairs.similar {
            let (dist, grads) =
                model.distance_with_grads(&trainset.instances[i], &trainset.instances[j]);
            if dist - margin_lo > 0.0 {
                accumulate(&mut acc, &grads, w);
            }
        }
    }
    if pairs.n2() > 0 {
        let w = -1.0 / pairs.n2() as f64;
        for &(m, n) in &pairs.dissimilar {
            let (dist, grads) =
                model.distance_with_grads(&trainset.instances[m], &trainset.instances[n]);
            if margin_hi - dist > 0.0 {
                accumulate(&mut acc, &grads, w);
            }
        }
    }

    let shrink = |metric: &MetricMatrix, target: &mut DMatrix<f64>| {
        let norm = metric.frobenius_norm();
        if norm > 1e-12 {
            *target += metric.as_matrix() * (config.alpha / norm);
        }
    };
    shrink(&model.background_metric, &mut acc.background_metric);
    for (region, grad) in model.regions.iter().zip(acc.regions.iter_mut()) {
        shrink(&region.metric, &mut grad.metric);
    }
    acc
}

/// One descent step followed by the feasibility projections.
fn apply_step(model: &ModelParams, grads: &DistanceGradients, rate: f64, radius_floor: f64) -> ModelParams {
    let background_metric = MetricMatrix::new(
        model.background_metric.as_matrix() - &grads.background_metric * rate,
    )
    .project_psd(0.0);
    let regions = model
        .regions
        .iter()
        .zip(&grads.regions)
        .map(|(region, grad)| Region {
            metric: MetricMatrix::new(region.metric.as_matrix() - &grad.metric * rate)
                .project_psd(0.0),
            ball: Ball::new(
                &region.ball.center - &grad.center * rate,
                (region.ball.radius - grad.radius * rate).max(radius_floor),
            ),
        })
        .collect();
    ModelParams {
        background_metric,
        regions,
    }
}

/// Runs the full training loop: heuristic initialization, fixed target
/// pairs, gradient descent with per-step PSD projection and radius
/// clamping. Stops at `max_epochs` or once the objective changes by
/// less than `tol` (relative) over a 10-epoch window.
pub fn train(trainset: &LabeledDataset, config: &TrainConfig) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let mut model = initialize_model(trainset, config);
    let pairs = build_target_pairs(trainset, config.k_neighbors);

    let mut history = vec![objective(&model, trainset, &pairs, config)];
    if !history[0].is_finite() {
        return Err(TrainError::NonFiniteObjective { epoch: 0 });
    }

    const STOP_WINDOW: usize = 10;
    for epoch in 0..config.max_epochs {
        let grads = objective_gradient(&model, trainset, &pairs, config);
        model = apply_step(&model, &grads, config.learning_rate, config.radius_floor);

        let obj = objective(&model, trainset, &pairs, config);
        if !obj.is_finite() {
            return Err(TrainError::NonFiniteObjective { epoch: epoch + 1 });
        }
        history.push(obj);
        model
            .validate(config.radius_floor)
            .map_err(|message| TrainError::InvariantViolated { epoch: epoch + 1, message })?;

        if history.len() > STOP_WINDOW {
            let prev = history[history.len() - 1 - STOP_WINDOW];
            let rel = (obj - prev).abs() / prev.abs().max(1e-12);
            if rel < config.tol {
                break;
            }
        }
    }

    Ok(TrainReport {
        epochs_run: history.len() - 1,
        objective_history: history,
        final_model: model,
    })
}
