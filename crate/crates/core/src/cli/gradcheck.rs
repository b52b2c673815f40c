//! Finite-difference verification of every analytic gradient path.
//!
//! Three groups are exercised at seeded random, kink-free configurations:
//! the geometric γ-gradients, the per-pair distance gradients, and the
//! full objective gradient. "Kink-free" means every piecewise branch is
//! stable under the finite-difference step: discriminants away from the
//! tangency band, intersection coefficients away from 0 and 1, quadratic
//! forms away from the zero floor, hinge arguments away from zero, and
//! the background-ratio clamp away from its switch point.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::LabeledDataset;
use crate::distance::{DistanceGradients, ModelParams, Region};
use crate::geometry::{self, Ball, Segment};
use crate::metrics::MetricMatrix;
use crate::trainer::{objective, objective_gradient, TrainConfig};

const FD_STEP: f64 = 1e-6;
/// Margin keeping each piecewise branch stable under the FD step.
const KINK_MARGIN: f64 = 1e-3;
/// Gradient entries where analytic and FD are both below this are
/// treated as matching zeros.
const NEGLIGIBLE: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct GroupResult {
    pub group: &'static str,
    pub dim: usize,
    pub configs: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub results: Vec<GroupResult>,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }
}

/// Runs every group over every requested dimension.
pub fn run(dims: &[usize], seed: u64, configs_per_dim: usize, tolerance: f64) -> GradcheckReport {
    let mut results = Vec::new();
    for &dim in dims {
        results.push(check_gamma_gradients(dim, seed, configs_per_dim, tolerance));
        results.push(check_distance_gradients(dim, seed, configs_per_dim, tolerance));
        results.push(check_objective_gradients(dim, seed, configs_per_dim, tolerance));
    }
    GradcheckReport {
        tolerance,
        results,
    }
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    let denom = analytic.abs().max(fd.abs());
    if denom < NEGLIGIBLE {
        0.0
    } else {
        (analytic - fd).abs() / denom
    }
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-scale..scale))
}

fn random_pd_metric(rng: &mut ChaCha8Rng, d: usize) -> MetricMatrix {
    let l = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6));
    MetricMatrix::new(&l * l.transpose() + DMatrix::identity(d, d) * 0.4)
}

fn perpendicular_unit(rng: &mut ChaCha8Rng, dir: &DVector<f64>) -> DVector<f64> {
    loop {
        let cand = random_vector(rng, dir.len(), 1.0);
        let perp = &cand - dir * (cand.dot(dir) / dir.norm_squared());
        if perp.norm() > 1e-6 {
            return perp.normalize();
        }
    }
}

/// Ball whose line coefficients against `segment` are exactly (lu, lv):
/// center at the chord midpoint pushed off the line by `h`.
fn ball_with_roots(rng: &mut ChaCha8Rng, segment: &Segment, lu: f64, lv: f64, h: f64) -> Ball {
    let dir = &segment.end - &segment.start;
    let n = perpendicular_unit(rng, &dir);
    let center = segment.point_at((lu + lv) / 2.0) + n * h;
    let half_chord_sq = dir.norm_squared() * (lv - lu).powi(2) / 4.0;
    Ball::new(center, (half_chord_sq + h * h).sqrt())
}

/// Branch stability of one segment/ball pair under the FD step.
pub(crate) fn geometry_kink_free(segment: &Segment, ball: &Ball) -> bool {
    let coeffs = geometry::line_ball_coefficients(segment, ball);
    if coeffs.a == 0.0 {
        return false;
    }
    let scale = (coeffs.b * coeffs.b).max(1.0);
    if coeffs.delta.abs() < KINK_MARGIN * scale {
        return false;
    }
    if coeffs.delta < 0.0 {
        return true; // cleanly disjoint
    }
    for lambda in [coeffs.lambda_u, coeffs.lambda_v] {
        if lambda.abs() < KINK_MARGIN || (lambda - 1.0).abs() < KINK_MARGIN {
            return false;
        }
    }
    true
}

fn check_gamma_gradients(
    dim: usize,
    seed: u64,
    configs: usize,
    tolerance: f64,
) -> GroupResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA001 ^ (dim as u64) << 32);
    let mut max_err = 0.0f64;
    let mut accepted = 0;
    let mut attempts = 0;

    while accepted < configs {
        attempts += 1;
        assert!(attempts < configs * 1000, "gamma generator starved of kink-free configs");
        let start = random_vector(&mut rng, dim, 2.0);
        let dir = random_vector(&mut rng, dim, 1.0);
        if dir.norm() < 0.3 {
            continue;
        }
        let segment = Segment::new(start.clone(), &start + &dir * rng.random_range(1.0..2.0));
        // Cycle through the case families so every branch gets exercised.
        let (lu, lv) = match accepted % 5 {
            0 => (rng.random_range(0.1..0.35), rng.random_range(0.6..0.9)),
            1 => (rng.random_range(-0.9..-0.2), rng.random_range(0.2..0.85)),
            2 => (rng.random_range(0.15..0.8), rng.random_range(1.2..1.9)),
            3 => (rng.random_range(-0.9..-0.3), rng.random_range(1.2..1.9)),
            _ => (rng.random_range(-1.9..-1.2), rng.random_range(-0.9..-0.3)),
        };
        let offset = rng.random_range(0.05..0.5);
        let ball = ball_with_roots(&mut rng, &segment, lu, lv, offset);
        if !geometry_kink_free(&segment, &ball) {
            continue;
        }
        accepted += 1;

        let (analytic_o, analytic_r) = geometry::gamma_gradients(&segment, &ball);
        for k in 0..dim {
            let mut plus = ball.clone();
            plus.center[k] += FD_STEP;
            let mut minus = ball.clone();
            minus.center[k] -= FD_STEP;
            let fd = (geometry::gamma(&segment, &plus) - geometry::gamma(&segment, &minus))
                / (2.0 * FD_STEP);
            max_err = max_err.max(rel_err(analytic_o[k], fd));
        }
        let plus = Ball::new(ball.center.clone(), ball.radius + FD_STEP);
        let minus = Ball::new(ball.center.clone(), ball.radius - FD_STEP);
        let fd =
            (geometry::gamma(&segment, &plus) - geometry::gamma(&segment, &minus)) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(analytic_r, fd));
    }

    GroupResult {
        group: "gamma",
        dim,
        configs,
        max_rel_err: max_err,
        pass: max_err < tolerance,
    }
}

/// Flattens every model parameter: background metric row-major, then per
/// region its metric (row-major), center, radius.
pub fn flatten_model(model: &ModelParams) -> Vec<f64> {
    let d = model.dim();
    let mut out = Vec::new();
    for r in 0..d {
        for c in 0..d {
            out.push(model.background_metric.as_matrix()[(r, c)]);
        }
    }
    for region in &model.regions {
        for r in 0..d {
            for c in 0..d {
                out.push(region.metric.as_matrix()[(r, c)]);
            }
        }
        out.extend(region.ball.center.iter());
        out.push(region.ball.radius);
    }
    out
}

/// Inverse of [`flatten_model`]; matrices are taken as-is (each entry is
/// an independent parameter here, so no symmetrization or projection).
pub fn unflatten_model(dim: usize, num_regions: usize, theta: &[f64]) -> ModelParams {
    let mut pos = 0;
    let mut take_matrix = |theta: &[f64], pos: &mut usize| {
        let m = DMatrix::from_fn(dim, dim, |r, c| theta[*pos + r * dim + c]);
        *pos += dim * dim;
        MetricMatrix::new(m)
    };
    let background_metric = take_matrix(theta, &mut pos);
    let mut regions = Vec::with_capacity(num_regions);
    for _ in 0..num_regions {
        let metric = take_matrix(theta, &mut pos);
        let center = DVector::from_row_slice(&theta[pos..pos + dim]);
        pos += dim;
        let radius = theta[pos];
        pos += 1;
        regions.push(Region {
            ball: Ball::new(center, radius),
            metric,
        });
    }
    assert_eq!(pos, theta.len(), "parameter vector length mismatch");
    ModelParams {
        background_metric,
        regions,
    }
}

/// Flattens gradients in the order of [`flatten_model`].
pub fn flatten_gradients(grads: &DistanceGradients) -> Vec<f64> {
    let d = grads.background_metric.nrows();
    let mut out = Vec::new();
    for r in 0..d {
        for c in 0..d {
            out.push(grads.background_metric[(r, c)]);
        }
    }
    for region in &grads.regions {
        for r in 0..d {
            for c in 0..d {
                out.push(region.metric[(r, c)]);
            }
        }
        out.extend(region.center.iter());
        out.push(region.radius);
    }
    out
}

/// Central finite differences of a scalar function over the flattened
/// parameter vector.
fn fd_gradient<F: Fn(&ModelParams) -> f64>(
    model: &ModelParams,
    eval: F,
) -> Vec<f64> {
    let theta = flatten_model(model);
    let dim = model.dim();
    let regions = model.num_regions();
    (0..theta.len())
        .map(|i| {
            let mut plus = theta.clone();
            plus[i] += FD_STEP;
            let mut minus = theta.clone();
            minus[i] -= FD_STEP;
            (eval(&unflatten_model(dim, regions, &plus))
                - eval(&unflatten_model(dim, regions, &minus)))
                / (2.0 * FD_STEP)
        })
        .collect()
}

/// Kink-freeness of one full distance evaluation.
pub(crate) fn distance_kink_free(model: &ModelParams, x_i: &DVector<f64>, x_j: &DVector<f64>) -> bool {
    let segment = Segment::new(x_i.clone(), x_j.clone());
    let mut gamma_sum = 0.0;
    let mut gamma_varies = false;
    for region in &model.regions {
        if !geometry_kink_free(&segment, &region.ball) {
            return false;
        }
        let coeffs = geometry::line_ball_coefficients(&segment, &region.ball);
        gamma_sum += geometry::clamp_to_segment(coeffs).gamma;
        if coeffs.has_two_roots() {
            // γ responds to the ball parameters only when a root lies
            // strictly inside the segment.
            let inside = |l: f64| l > 0.0 && l < 1.0;
            if inside(coeffs.lambda_u) || inside(coeffs.lambda_v) {
                gamma_varies = true;
            }
        }
        if region.metric.quadratic_form(x_i, x_j) < 1e-6 {
            return false;
        }
    }
    if model.background_metric.quadratic_form(x_i, x_j) < 1e-6 {
        return false;
    }
    // The γ_b clamp must not switch under the FD step. With every γ_s
    // locally constant the sum cannot move, so the clamp is stable even
    // at exactly 1.
    !gamma_varies || (1.0 - gamma_sum).abs() > KINK_MARGIN
}

/// A model with two regions engineered to intersect the segment between
/// `x_i` and `x_j` in different case families.
fn model_for_pair(
    rng: &mut ChaCha8Rng,
    x_i: &DVector<f64>,
    x_j: &DVector<f64>,
) -> ModelParams {
    let d = x_i.len();
    let segment = Segment::new(x_i.clone(), x_j.clone());
    let (lu0, lv0, h0) = (
        rng.random_range(0.1..0.3),
        rng.random_range(0.45..0.7),
        rng.random_range(0.1..0.4),
    );
    let interior = ball_with_roots(rng, &segment, lu0, lv0, h0);
    let (lu1, lv1, h1) = (
        rng.random_range(-0.8..-0.2),
        rng.random_range(0.1..0.25),
        rng.random_range(0.1..0.4),
    );
    let clipped = ball_with_roots(rng, &segment, lu1, lv1, h1);
    ModelParams {
        background_metric: random_pd_metric(rng, d),
        regions: vec![
            Region { ball: interior, metric: random_pd_metric(rng, d) },
            Region { ball: clipped, metric: random_pd_metric(rng, d) },
        ],
    }
}

fn check_distance_gradients(
    dim: usize,
    seed: u64,
    configs: usize,
    tolerance: f64,
) -> GroupResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB002 ^ (dim as u64) << 32);
    let mut max_err = 0.0f64;
    let mut accepted = 0;
    let mut attempts = 0;

    while accepted < configs {
        attempts += 1;
        assert!(attempts < configs * 1000, "distance generator starved of kink-free configs");
        let x_i = random_vector(&mut rng, dim, 2.0);
        let dir = random_vector(&mut rng, dim, 1.0);
        if dir.norm() < 0.3 {
            continue;
        }
        let x_j = &x_i + dir.normalize() * rng.random_range(1.0..2.5);
        let model = model_for_pair(&mut rng, &x_i, &x_j);
        if !distance_kink_free(&model, &x_i, &x_j) {
            continue;
        }
        accepted += 1;

        let (_, grads) = model.distance_with_grads(&x_i, &x_j);
        let analytic = flatten_gradients(&grads);
        let fd = fd_gradient(&model, |m| m.distance(&x_i, &x_j));
        for (a, f) in analytic.iter().zip(&fd) {
            max_err = max_err.max(rel_err(*a, *f));
        }
    }

    GroupResult {
        group: "distance",
        dim,
        configs,
        max_rel_err: max_err,
        pass: max_err < tolerance,
    }
}

fn check_objective_gradients(
    dim: usize,
    seed: u64,
    configs: usize,
    tolerance: f64,
) -> GroupResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC003 ^ (dim as u64) << 32);
    let config = TrainConfig {
        alpha: 0.1,
        margin_c: 0.5,
        k_neighbors: 1,
        num_regions: 2,
        ..TrainConfig::default()
    };
    let mut max_err = 0.0f64;
    let mut accepted = 0;
    let mut attempts = 0;

    'outer: while accepted < configs {
        attempts += 1;
        assert!(attempts < configs * 1000, "objective generator starved of kink-free configs");
        // Small two-class cloud with unit-ish scale.
        let n = 10;
        let mut instances = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let base = if i % 2 == 0 { -0.4 } else { 0.4 };
            let mut x = random_vector(&mut rng, dim, 0.8);
            x[0] += base;
            instances.push(x);
            labels.push(if i % 2 == 0 { -1 } else { 1 });
        }
        let trainset = LabeledDataset::new(instances, labels);
        let pairs = crate::trainer::build_target_pairs(&trainset, config.k_neighbors);

        // Two regions centered on the midpoints of random pairs so the
        // geometry actually participates.
        let mut regions = Vec::new();
        for _ in 0..2 {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n);
            if b == a {
                b = (b + 1) % n;
            }
            let mid = (&trainset.instances[a] + &trainset.instances[b]) * 0.5;
            let gap = (&trainset.instances[a] - &trainset.instances[b]).norm();
            regions.push(Region {
                ball: Ball::new(mid, gap * rng.random_range(0.3..0.6)),
                metric: random_pd_metric(&mut rng, dim),
            });
        }
        let model = ModelParams {
            background_metric: random_pd_metric(&mut rng, dim),
            regions,
        };

        // Every pair must sit cleanly inside its hinge branch and away
        // from geometric kinks.
        let margin_lo = 1.0 - config.margin_c;
        let margin_hi = 1.0 + config.margin_c;
        for &(i, j) in pairs.similar.iter().chain(&pairs.dissimilar) {
            let (xi, xj) = (&trainset.instances[i], &trainset.instances[j]);
            if !distance_kink_free(&model, xi, xj) {
                continue 'outer;
            }
            let d = model.distance(xi, xj);
            if (d - margin_lo).abs() < KINK_MARGIN || (margin_hi - d).abs() < KINK_MARGIN {
                continue 'outer;
            }
        }
        accepted += 1;

        let analytic = flatten_gradients(&objective_gradient(&model, &trainset, &pairs, &config));
        let fd = fd_gradient(&model, |m| objective(m, &trainset, &pairs, &config));
        for (a, f) in analytic.iter().zip(&fd) {
            max_err = max_err.max(rel_err(*a, *f));
        }
    }

    GroupResult {
        group: "objective",
        dim,
        configs,
        max_rel_err: max_err,
        pass: max_err < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x_i = random_vector(&mut rng, 4, 1.0);
        let x_j = &x_i + DVector::from_element(4, 1.5);
        let model = model_for_pair(&mut rng, &x_i, &x_j);
        let theta = flatten_model(&model);
        assert_eq!(theta.len(), 16 + 2 * (16 + 4 + 1));
        let back = unflatten_model(4, 2, &theta);
        assert_eq!(model, back);
    }

    #[test]
    fn small_sweep_passes_in_low_dims() {
        let report = run(&[2, 3], 1234, 10, 1e-4);
        for r in &report.results {
            assert!(
                r.pass,
                "group {} d={} max rel err {}",
                r.group, r.dim, r.max_rel_err
            );
        }
    }
}
