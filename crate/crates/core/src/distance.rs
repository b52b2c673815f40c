//! The composite region-weighted distance and its parameter gradients.
//!
//! A model carries a background metric plus a set of ball regions, each
//! with its own local metric. The distance between two points weights
//! each metric's Mahalanobis length by the fraction of the segment lying
//! in the corresponding region:
//!
//! ```text
//! D(x_i, x_j) = γ_b · ‖x_i − x_j‖_{M(B)} + Σ_s γ_s · ‖x_i − x_j‖_{M(A_s)}
//! γ_b = max(1 − Σ_s γ_s, 0)
//! ```
//!
//! The clamped `γ_b` is exact when regions do not overlap and a cheap
//! approximation otherwise. Since `γ` is a function of the segment (not
//! of either endpoint alone) the distance is symmetric by construction.

use nalgebra::{DMatrix, DVector};

use crate::geometry::{self, Ball, Segment};
use crate::metrics::{MetricMatrix, QUADRATIC_FORM_FLOOR};

/// One ball region with its local metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub ball: Ball,
    pub metric: MetricMatrix,
}

/// The full parameter set: background metric, region centers/radii and
/// local metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub background_metric: MetricMatrix,
    pub regions: Vec<Region>,
}

impl ModelParams {
    /// Background-only model with the identity metric: the plain
    /// Euclidean nearest-neighbor baseline.
    pub fn identity(dim: usize) -> Self {
        Self {
            background_metric: MetricMatrix::identity(dim),
            regions: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.background_metric.dim()
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Checks the model invariants: consistent dimensions, symmetric PSD
    /// metrics, positive radii above `radius_floor`.
    pub fn validate(&self, radius_floor: f64) -> Result<(), String> {
        let d = self.dim();
        if !self.background_metric.is_symmetric(1e-12) {
            return Err("background metric is not symmetric".into());
        }
        if !self.background_metric.is_psd(1e-9) {
            return Err("background metric is not PSD".into());
        }
        for (s, region) in self.regions.iter().enumerate() {
            if region.metric.dim() != d || region.ball.dim() != d {
                return Err(format!("region {s} dimension mismatch"));
            }
            if !region.metric.is_symmetric(1e-12) {
                return Err(format!("region {s} metric is not symmetric"));
            }
            if !region.metric.is_psd(1e-9) {
                return Err(format!("region {s} metric is not PSD"));
            }
            if !(region.ball.radius >= radius_floor) {
                return Err(format!(
                    "region {s} radius {} below floor {radius_floor}",
                    region.ball.radius
                ));
            }
        }
        Ok(())
    }

    /// Distance under the composite metric. See the module docs.
    ///
    /// # Panics
    /// Panics if point dimensions do not match the model.
    pub fn distance(&self, x_i: &DVector<f64>, x_j: &DVector<f64>) -> f64 {
        let segment = Segment::new(x_i.clone(), x_j.clone());
        let mut gamma_sum = 0.0;
        let mut dist = 0.0;
        for region in &self.regions {
            let g = geometry::gamma(&segment, &region.ball);
            gamma_sum += g;
            if g > 0.0 {
                dist += g * region.metric.mahalanobis_length(x_i, x_j);
            }
        }
        let gamma_b = (1.0 - gamma_sum).max(0.0);
        if gamma_b > 0.0 {
            dist += gamma_b * self.background_metric.mahalanobis_length(x_i, x_j);
        }
        dist
    }

    /// Distance plus partial derivatives with respect to every model
    /// parameter.
    ///
    /// Metric gradients are the standard Mahalanobis-length derivative
    /// `(γ/2) q^{−1/2} δδᵀ` (zero whenever the quadratic form sits below
    /// the numeric floor, the minimal-norm subgradient at a zero
    /// distance). Center and radius gradients chain the geometric
    /// `∂γ_s` through both the region term and — because `γ_b` loses
    /// whatever `γ_s` gains while the clamp is inactive — the background
    /// term:
    ///
    /// ```text
    /// ∂D/∂o_s = (L_s − 1[γ_b > 0] · L_B) · ∂γ_s/∂o_s
    /// ```
    ///
    /// and likewise for `r_s`, with `L` the respective lengths.
    pub fn distance_with_grads(
        &self,
        x_i: &DVector<f64>,
        x_j: &DVector<f64>,
    ) -> (f64, DistanceGradients) {
        let d = self.dim();
        let segment = Segment::new(x_i.clone(), x_j.clone());
        let diff = x_i - x_j;

        // Per-region intersection ratios first; γ_b depends on their sum.
        let gammas: Vec<f64> = self
            .regions
            .iter()
            .map(|region| geometry::gamma(&segment, &region.ball))
            .collect();
        let gamma_b = (1.0 - gammas.iter().sum::<f64>()).max(0.0);

        let q_b = self.background_metric.quadratic_form(x_i, x_j);
        let len_b = q_b.sqrt();

        let mut dist = gamma_b * len_b;
        let grad_background = if gamma_b > 0.0 && q_b > QUADRATIC_FORM_FLOOR {
            outer(&diff) * (gamma_b / (2.0 * len_b))
        } else {
            DMatrix::zeros(d, d)
        };

        let mut region_grads = Vec::with_capacity(self.regions.len());
        for (region, &g) in self.regions.iter().zip(&gammas) {
            let q_s = region.metric.quadratic_form(x_i, x_j);
            let len_s = q_s.sqrt();
            dist += g * len_s;

            let grad_metric = if g > 0.0 && q_s > QUADRATIC_FORM_FLOOR {
                outer(&diff) * (g / (2.0 * len_s))
            } else {
                DMatrix::zeros(d, d)
            };

            let (dgamma_do, dgamma_dr) = geometry::gamma_gradients(&segment, &region.ball);
            let factor = len_s - if gamma_b > 0.0 { len_b } else { 0.0 };
            region_grads.push(RegionGradients {
                metric: grad_metric,
                center: dgamma_do * factor,
                radius: dgamma_dr * factor,
            });
        }

        (
            dist,
            DistanceGradients {
                background_metric: grad_background,
                regions: region_grads,
            },
        )
    }
}

/// Gradients of one distance evaluation with respect to every parameter.
#[derive(Debug, Clone)]
pub struct DistanceGradients {
    pub background_metric: DMatrix<f64>,
    pub regions: Vec<RegionGradients>,
}

/// Per-region slice of [`DistanceGradients`].
#[derive(Debug, Clone)]
pub struct RegionGradients {
    pub metric: DMatrix<f64>,
    pub center: DVector<f64>,
    pub radius: f64,
}

fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
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
        MetricMatrix::new(&l * l.transpose() + DMatrix::identity(d, d) * 0.2)
    }

    /// Model with regions placed along the segment between the two query
    /// points so that each covers its own sub-interval (disjoint cases).
    fn model_covering_segment(
        rng: &mut ChaCha8Rng,
        x_i: &DVector<f64>,
        x_j: &DVector<f64>,
        intervals: &[(f64, f64)],
    ) -> ModelParams {
        let d = x_i.len();
        let dir = x_j - x_i;
        let regions = intervals
            .iter()
            .map(|&(lo, hi)| {
                let center = x_i + &dir * ((lo + hi) / 2.0);
                let radius = dir.norm() * (hi - lo) / 2.0;
                Region {
                    ball: Ball::new(center, radius),
                    metric: random_psd(rng, d),
                }
            })
            .collect();
        ModelParams {
            background_metric: random_psd(rng, d),
            regions,
        }
    }

    #[test]
    fn background_only_identity_is_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let model = ModelParams::identity(4);
        for _ in 0..20 {
            let a = random_vector(&mut rng, 4, 3.0);
            let b = random_vector(&mut rng, 4, 3.0);
            assert!((model.distance(&a, &b) - (&a - &b).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_contained_segment_uses_region_metric_only() {
        let x_i = vec2(0.0, 0.0);
        let x_j = vec2(0.3, 0.4);
        let model = ModelParams {
            background_metric: MetricMatrix::identity(2),
            regions: vec![Region {
                ball: Ball::new(vec2(0.15, 0.2), 1.0),
                metric: MetricMatrix::new(DMatrix::identity(2, 2) * 4.0),
            }],
        };
        // Segment length 0.5, entirely inside: γ = 1, γ_b = 0, D = 2·0.5.
        assert!((model.distance(&x_i, &x_j) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_coverage_matches_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        const POINTS: usize = 1_000_000;
        for trial in 0..10 {
            let d = 3;
            let x_i = random_vector(&mut rng, d, 2.0);
            let x_j = &x_i + random_vector(&mut rng, d, 2.0) + DVector::from_element(d, 1.0);
            // Two disjoint balls covering separate chunks of the segment.
            let model = model_covering_segment(&mut rng, &x_i, &x_j, &[(0.1, 0.3), (0.5, 0.8)]);

            // Oracle: γ per ball from dense point sampling, then the
            // distance formula with those sampled ratios.
            let seg = Segment::new(x_i.clone(), x_j.clone());
            let mut gamma_sum = 0.0;
            let mut oracle = 0.0;
            for region in &model.regions {
                let mut inside = 0usize;
                for k in 0..POINTS {
                    let lambda = (k as f64 + 0.5) / POINTS as f64;
                    if region.ball.contains(&seg.point_at(lambda)) {
                        inside += 1;
                    }
                }
                let g = inside as f64 / POINTS as f64;
                gamma_sum += g;
                oracle += g * region.metric.mahalanobis_length(&x_i, &x_j);
            }
            oracle += (1.0 - gamma_sum).max(0.0)
                * model.background_metric.mahalanobis_length(&x_i, &x_j);

            let got = model.distance(&x_i, &x_j);
            assert!(
                (got - oracle).abs() < 5e-4,
                "trial {trial}: {got} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn background_gradient_without_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let model = ModelParams {
            background_metric: random_psd(&mut rng, 3),
            regions: vec![],
        };
        let a = random_vector(&mut rng, 3, 2.0);
        let b = random_vector(&mut rng, 3, 2.0);
        let (dist, grads) = model.distance_with_grads(&a, &b);
        let diff = &a - &b;
        let expect = (&diff * diff.transpose()) / (2.0 * dist);
        assert!((grads.background_metric - expect).norm() < 1e-12);
        assert!(grads.regions.is_empty());
    }

    #[test]
    fn far_region_contributes_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let model = ModelParams {
            background_metric: MetricMatrix::identity(2),
            regions: vec![Region {
                ball: Ball::new(vec2(100.0, 100.0), 1.0),
                metric: random_psd(&mut rng, 2),
            }],
        };
        let (_, grads) = model.distance_with_grads(&vec2(0.0, 0.0), &vec2(1.0, 0.0));
        let rg = &grads.regions[0];
        assert_eq!(rg.metric.norm(), 0.0);
        assert_eq!(rg.center.norm(), 0.0);
        assert_eq!(rg.radius, 0.0);
    }

    /// Model with every parameter flattened for finite differencing.
    fn fd_distance_gradients(
        model: &ModelParams,
        x_i: &DVector<f64>,
        x_j: &DVector<f64>,
        step: f64,
    ) -> DistanceGradients {
        let d = model.dim();
        let eval = |m: &ModelParams| m.distance(x_i, x_j);
        let mut background = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                let mut plus = model.clone();
                let mut minus = model.clone();
                let mut mp = plus.background_metric.as_matrix().clone();
                mp[(r, c)] += step;
                plus.background_metric = MetricMatrix::new(mp);
                let mut mm = minus.background_metric.as_matrix().clone();
                mm[(r, c)] -= step;
                minus.background_metric = MetricMatrix::new(mm);
                background[(r, c)] = (eval(&plus) - eval(&minus)) / (2.0 * step);
            }
        }
        let mut regions = Vec::new();
        for s in 0..model.regions.len() {
            let mut metric = DMatrix::zeros(d, d);
            for r in 0..d {
                for c in 0..d {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    let mut mp = plus.regions[s].metric.as_matrix().clone();
                    mp[(r, c)] += step;
                    plus.regions[s].metric = MetricMatrix::new(mp);
                    let mut mm = minus.regions[s].metric.as_matrix().clone();
                    mm[(r, c)] -= step;
                    minus.regions[s].metric = MetricMatrix::new(mm);
                    metric[(r, c)] = (eval(&plus) - eval(&minus)) / (2.0 * step);
                }
            }
            let mut center = DVector::zeros(d);
            for k in 0..d {
                let mut plus = model.clone();
                plus.regions[s].ball.center[k] += step;
                let mut minus = model.clone();
                minus.regions[s].ball.center[k] -= step;
                center[k] = (eval(&plus) - eval(&minus)) / (2.0 * step);
            }
            let mut plus = model.clone();
            plus.regions[s].ball.radius += step;
            let mut minus = model.clone();
            minus.regions[s].ball.radius -= step;
            let radius = (eval(&plus) - eval(&minus)) / (2.0 * step);
            regions.push(RegionGradients { metric, center, radius });
        }
        DistanceGradients {
            background_metric: background,
            regions,
        }
    }

    fn assert_rel_close(analytic: f64, fd: f64, tol: f64, what: &str) {
        let denom = analytic.abs().max(fd.abs());
        if denom > 1e-7 {
            let rel = (analytic - fd).abs() / denom;
            assert!(rel < tol, "{what}: analytic {analytic} vs fd {fd} (rel {rel})");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        for trial in 0..30 {
            let d = 3;
            let x_i = random_vector(&mut rng, d, 2.0);
            let mut x_j = random_vector(&mut rng, d, 2.0);
            if (&x_j - &x_i).norm() < 0.8 {
                x_j += DVector::from_element(d, 1.0);
            }
            // Interior-ish coverage away from case kinks.
            let model = model_covering_segment(&mut rng, &x_i, &x_j, &[(0.15, 0.45), (0.55, 0.85)]);
            let (_, analytic) = model.distance_with_grads(&x_i, &x_j);
            let fd = fd_distance_gradients(&model, &x_i, &x_j, 1e-6);

            for r in 0..d {
                for c in 0..d {
                    assert_rel_close(
                        analytic.background_metric[(r, c)],
                        fd.background_metric[(r, c)],
                        1e-4,
                        &format!("trial {trial} background ({r},{c})"),
                    );
                }
            }
            for s in 0..model.regions.len() {
                for r in 0..d {
                    for c in 0..d {
                        assert_rel_close(
                            analytic.regions[s].metric[(r, c)],
                            fd.regions[s].metric[(r, c)],
                            1e-4,
                            &format!("trial {trial} region {s} metric ({r},{c})"),
                        );
                    }
                }
                for k in 0..d {
                    assert_rel_close(
                        analytic.regions[s].center[k],
                        fd.regions[s].center[k],
                        1e-4,
                        &format!("trial {trial} region {s} center[{k}]"),
                    );
                }
                assert_rel_close(
                    analytic.regions[s].radius,
                    fd.regions[s].radius,
                    1e-4,
                    &format!("trial {trial} region {s} radius"),
                );
            }
        }
    }

    #[test]
    fn distance_is_symmetric_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..100 {
            let d = rng.random_range(2..5);
            let x_i = random_vector(&mut rng, d, 3.0);
            let x_j = random_vector(&mut rng, d, 3.0);
            let mut regions = Vec::new();
            for _ in 0..rng.random_range(0..4usize) {
                regions.push(Region {
                    ball: Ball::new(random_vector(&mut rng, d, 3.0), rng.random_range(0.2..2.0)),
                    metric: random_psd(&mut rng, d),
                });
            }
            let model = ModelParams {
                background_metric: random_psd(&mut rng, d),
                regions,
            };
            let fwd = model.distance(&x_i, &x_j);
            let bwd = model.distance(&x_j, &x_i);
            assert!(fwd >= 0.0);
            assert!((fwd - bwd).abs() < 1e-10, "asymmetry {fwd} vs {bwd}");
        }
    }

    #[test]
    fn disjoint_partition_reduces_to_plain_mahalanobis() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..30 {
            let d = 3;
            let x_i = random_vector(&mut rng, d, 2.0);
            let x_j = &x_i + DVector::from_element(d, 2.0);
            let shared = random_psd(&mut rng, d);
            // Disjoint balls covering sub-intervals; all metrics equal.
            let mut model =
                model_covering_segment(&mut rng, &x_i, &x_j, &[(0.05, 0.3), (0.4, 0.6), (0.7, 0.95)]);
            model.background_metric = shared.clone();
            for region in &mut model.regions {
                region.metric = shared.clone();
            }
            let composite = model.distance(&x_i, &x_j);
            let plain = shared.mahalanobis_length(&x_i, &x_j);
            assert!(
                (composite - plain).abs() < 1e-9,
                "partition identity violated: {composite} vs {plain}"
            );
        }
    }
}
