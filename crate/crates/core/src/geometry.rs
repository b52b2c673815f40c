//! Segment–ball intersection geometry.
//!
//! A segment from `x_i` to `x_j` is parameterized as `x_i + λ(x_j − x_i)`
//! with `λ ∈ [0, 1]`. Substituting into the sphere equation
//! `‖x_i + λ(x_j − x_i) − o‖² = r²` gives a quadratic `aλ² + bλ + c = 0`
//! with
//!
//! ```text
//! a = (x_j − x_i)ᵀ(x_j − x_i)
//! b = 2(x_j − x_i)ᵀ(x_i − o)
//! c = (x_i − o)ᵀ(x_i − o) − r²
//! ```
//!
//! The roots `λ_u ≤ λ_v` locate where the infinite line enters and leaves
//! the ball; clamping them to `[0, 1]` yields `λ_p, λ_q`, and
//! `γ = λ_q − λ_p` is the fraction of the segment inside the ball. The
//! case-by-case partial derivatives of `γ` with respect to the ball's
//! center and radius drive region-placement learning.

use nalgebra::DVector;

/// A closed ball (center, radius) located under Euclidean geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl Ball {
    /// # Panics
    /// Panics if the radius is not strictly positive and finite.
    pub fn new(center: DVector<f64>, radius: f64) -> Self {
        assert!(
            radius > 0.0 && radius.is_finite(),
            "ball radius must be positive and finite, got {radius}"
        );
        Self { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Closed-ball membership test.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (x - &self.center).norm_squared() <= self.radius * self.radius
    }
}

/// A directed line segment from `start` (x_i) to `end` (x_j).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: DVector<f64>,
    pub end: DVector<f64>,
}

impl Segment {
    /// # Panics
    /// Panics on non-finite endpoints or mismatched dimensions.
    /// Degenerate segments (start == end) are allowed.
    pub fn new(start: DVector<f64>, end: DVector<f64>) -> Self {
        assert_eq!(start.len(), end.len(), "segment endpoint dimension mismatch");
        assert!(
            start.iter().chain(end.iter()).all(|v| v.is_finite()),
            "segment endpoints must be finite"
        );
        Self { start, end }
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// The point `start + λ(end − start)`.
    pub fn point_at(&self, lambda: f64) -> DVector<f64> {
        &self.start + (&self.end - &self.start) * lambda
    }
}

/// Quadratic coefficients, discriminant, line/segment intersection
/// coefficients, and the intersection ratio for one segment/ball pair.
///
/// `lambda_u`/`lambda_v` are NaN until the discriminant test passes
/// (two real roots); `lambda_p`, `lambda_q` and `gamma` are NaN until
/// [`clamp_to_segment`] fills them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionResult {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub gamma: f64,
}

impl IntersectionResult {
    /// True when the line genuinely crosses the sphere: discriminant
    /// above the tangency band and a non-degenerate quadratic.
    pub fn has_two_roots(&self) -> bool {
        self.a > 0.0 && self.delta > delta_epsilon(self.b)
    }
}

/// Tangency band for the discriminant: |Δ| at or below this value is
/// treated as tangent (zero-length intersection). Relative to b² so the
/// band scales with the conditioning of the quadratic.
pub fn delta_epsilon(b: f64) -> f64 {
    1e-12 * (b * b).max(1.0)
}

/// Solves the line/sphere quadratic and fills `a, b, c, delta` and (when
/// the line crosses the sphere) the line coefficients `lambda_u <= lambda_v`.
///
/// Degenerate segments (a == 0) and tangent/no-intersection cases leave
/// the lambdas NaN; clamping then yields gamma = 0.
///
/// # Panics
/// Panics if segment and ball dimensions differ.
pub fn line_ball_coefficients(segment: &Segment, ball: &Ball) -> IntersectionResult {
    assert_eq!(segment.dim(), ball.dim(), "segment/ball dimension mismatch");
    let dir = &segment.end - &segment.start;
    let offset = &segment.start - &ball.center;
    let a = dir.norm_squared();
    let b = 2.0 * dir.dot(&offset);
    let c = offset.norm_squared() - ball.radius * ball.radius;
    let delta = b * b - 4.0 * a * c;

    let (lambda_u, lambda_v) = if a > 0.0 && delta > delta_epsilon(b) {
        let sqrt_delta = delta.sqrt();
        ((-b - sqrt_delta) / (2.0 * a), (-b + sqrt_delta) / (2.0 * a))
    } else {
        (f64::NAN, f64::NAN)
    };

    IntersectionResult {
        a,
        b,
        c,
        delta,
        lambda_u,
        lambda_v,
        lambda_p: f64::NAN,
        lambda_q: f64::NAN,
        gamma: f64::NAN,
    }
}

/// Clamps the line coefficients to the segment:
/// `λ_p = min(max(λ_u, 0), 1)`, `λ_q = min(max(λ_v, 0), 1)`,
/// `γ = λ_q − λ_p`. Without two real roots the intersection is empty and
/// `γ = 0`.
///
/// Idempotent: the clamped values are recomputed from `(a, delta,
/// lambda_u, lambda_v)` only.
pub fn clamp_to_segment(result: IntersectionResult) -> IntersectionResult {
    let mut out = result;
    if result.has_two_roots() {
        out.lambda_p = result.lambda_u.clamp(0.0, 1.0);
        out.lambda_q = result.lambda_v.clamp(0.0, 1.0);
        out.gamma = out.lambda_q - out.lambda_p;
    } else {
        out.lambda_p = 0.0;
        out.lambda_q = 0.0;
        out.gamma = 0.0;
    }
    out
}

/// Convenience composition: coefficients plus clamping in one call.
pub fn intersect(segment: &Segment, ball: &Ball) -> IntersectionResult {
    clamp_to_segment(line_ball_coefficients(segment, ball))
}

/// Fraction of `segment` lying inside `ball`.
pub fn gamma(segment: &Segment, ball: &Ball) -> f64 {
    intersect(segment, ball).gamma
}

/// Case label for an intersection, matching the eight rows of the
/// case table: the discriminant rows and, for a crossing line, the six
/// placements of (λ_u, λ_v) relative to [0, 1].
pub fn case_label(result: &IntersectionResult) -> &'static str {
    if !result.has_two_roots() {
        return if result.delta < -delta_epsilon(result.b) {
            "Δ<0"
        } else {
            // Tangency band, including degenerate a == 0.
            "Δ=0"
        };
    }
    let (u, v) = (result.lambda_u, result.lambda_v);
    match (u < 0.0, u > 1.0, v < 0.0, v > 1.0) {
        (true, _, true, _) => "λ_u<0, λ_v<0",
        (true, _, false, false) => "λ_u<0, 0≤λ_v≤1",
        (true, _, _, true) => "λ_u<0, λ_v>1",
        (false, false, false, false) => "0≤λ_u≤1, 0≤λ_v≤1",
        (false, false, _, true) => "0≤λ_u≤1, λ_v>1",
        (_, true, _, true) => "λ_u>1, λ_v>1",
        // λ_u <= λ_v rules everything else out.
        _ => unreachable!("invalid lambda ordering"),
    }
}

/// Partial derivatives of γ with respect to the ball center and radius.
///
/// Zero in every saturated case (no intersection, tangent, segment
/// entirely inside or outside); closed-form in the three cases where γ
/// genuinely varies:
///
/// * both roots interior: `γ = λ_v − λ_u = √Δ / a`, so
///   `∂γ/∂o = 4Δ^{−1/2}(x_i − o − (b/2a)(x_j − x_i))` and
///   `∂γ/∂r = 4Δ^{−1/2} r`;
/// * entry clipped (`λ_u < 0`): `γ = λ_v`, differentiating the root
///   `(−b + √Δ)/(2a)`;
/// * exit clipped (`λ_v > 1`): `γ = 1 − λ_u`, differentiating
///   `(−b − √Δ)/(2a)` with opposite sign on the b-term.
///
/// At case boundaries (a root exactly 0 or 1, Δ on the tangency band)
/// the strict comparisons fall through to the zero branch, a valid
/// subgradient of the clamped γ.
pub fn gamma_gradients(segment: &Segment, ball: &Ball) -> (DVector<f64>, f64) {
    let coeffs = line_ball_coefficients(segment, ball);
    let d = segment.dim();
    let zero = || (DVector::zeros(d), 0.0);

    if !coeffs.has_two_roots() {
        return zero();
    }
    let (u, v) = (coeffs.lambda_u, coeffs.lambda_v);
    let u_interior = u > 0.0 && u < 1.0;
    let v_interior = v > 0.0 && v < 1.0;

    let a = coeffs.a;
    let b = coeffs.b;
    let inv_sqrt_delta = 1.0 / coeffs.delta.sqrt();
    let dir = &segment.end - &segment.start;
    let r = ball.radius;

    // dΔ/do = −4b(x_j − x_i) − 8a(o − x_i); shared by the clipped cases.
    let ddelta_do = || (&dir * (-4.0 * b)) + (&ball.center - &segment.start) * (-8.0 * a);

    if u_interior && v_interior {
        // γ = √Δ / a.
        let chord_mid = &segment.start + &dir * (-b / (2.0 * a)) - &ball.center;
        let dgamma_do = chord_mid * (4.0 * inv_sqrt_delta);
        let dgamma_dr = 4.0 * inv_sqrt_delta * r;
        (dgamma_do, dgamma_dr)
    } else if u < 0.0 && v_interior {
        // γ = λ_v = (−b + √Δ)/(2a).
        let dgamma_do = (&dir * 2.0 + ddelta_do() * (0.5 * inv_sqrt_delta)) / (2.0 * a);
        let dgamma_dr = 2.0 * inv_sqrt_delta * r;
        (dgamma_do, dgamma_dr)
    } else if u_interior && v > 1.0 {
        // γ = 1 − λ_u = 1 − (−b − √Δ)/(2a).
        let dgamma_do = (&dir * -2.0 + ddelta_do() * (0.5 * inv_sqrt_delta)) / (2.0 * a);
        let dgamma_dr = 2.0 * inv_sqrt_delta * r;
        (dgamma_do, dgamma_dr)
    } else {
        // Saturated: γ constant at 0 or 1, or a root sits exactly on a
        // case boundary (subgradient 0).
        zero()
    }
}
