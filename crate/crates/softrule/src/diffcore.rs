//! Differentiable numeric primitives.
//!
//! Every operation here has a closed-form forward evaluation and an exact
//! gradient companion. The pieces compose into the fixed rule-network
//! computation graph: subpredicate softmax, prob-sum blending, attention
//! min/max aggregation and sharpened sigmoids. Gradients are verified
//! against central finite differences (see [`grad_check`]).

use crate::error::{Error, Result};

/// Entropy floor shared by the entropy loss and predicate identification.
pub const ENTROPY_EPS: f64 = 1e-6;

/// A probability-like value constrained to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalar01(f64);

impl Scalar01 {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("Scalar01"));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfUnitRange {
                context: "Scalar01",
                value,
            });
        }
        Ok(Self(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// One trainable 3-way logit vector: positive literal, negated literal, exclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitTriple(pub(crate) [f64; 3]);

impl LogitTriple {
    pub fn new(w: [f64; 3]) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("LogitTriple"));
        }
        Ok(Self(w))
    }

    pub fn get(self) -> [f64; 3] {
        self.0
    }
}

/// A normalized distribution over the three subpredicate choices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbTriple(pub(crate) [f64; 3]);

impl ProbTriple {
    /// Validates strict positivity and unit sum (within 1e-12).
    pub fn new(p: [f64; 3]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("ProbTriple"));
        }
        if p.iter().any(|&x| x <= 0.0 || x >= 1.0) {
            return Err(Error::OutOfUnitRange {
                context: "ProbTriple component",
                value: *p
                    .iter()
                    .find(|&&x| x <= 0.0 || x >= 1.0)
                    .expect("component out of range"),
            });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::OutOfRange(
                "ProbTriple sum",
                "[1 - 1e-12, 1 + 1e-12]",
                sum,
            ));
        }
        Ok(Self(p))
    }

    pub fn get(self) -> [f64; 3] {
        self.0
    }
}

/// Whether attention aggregation leans toward the smallest or largest input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    Min,
    Max,
}

impl AggregationMode {
    /// Sign applied to the attention scores: -1 favors small values, +1 large.
    pub fn sign(self) -> f64 {
        match self {
            AggregationMode::Min => -1.0,
            AggregationMode::Max => 1.0,
        }
    }
}

/// Numerically stable three-way softmax (max-subtracted).
pub fn softmax3(w: LogitTriple) -> ProbTriple {
    ProbTriple(softmax3_raw(w.0))
}

/// Softmax kernel on a raw logit array. Inputs must be finite.
#[inline]
pub fn softmax3_raw(w: [f64; 3]) -> [f64; 3] {
    let m = w[0].max(w[1]).max(w[2]);
    let e = [
        (w[0] - m).exp(),
        (w[1] - m).exp(),
        (w[2] - m).exp(),
    ];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

/// Vector-Jacobian product of `softmax3`: maps an upstream gradient with
/// respect to the probabilities to a gradient with respect to the logits.
#[inline]
pub fn softmax3_vjp(p: [f64; 3], upstream: [f64; 3]) -> [f64; 3] {
    let dot = p[0] * upstream[0] + p[1] * upstream[1] + p[2] * upstream[2];
    [
        p[0] * (upstream[0] - dot),
        p[1] * (upstream[1] - dot),
        p[2] * (upstream[2] - dot),
    ]
}

/// Three-argument probabilistic sum, the product t-conorm
/// `x + y + z - xy - xz - yz + xyz`.
///
/// Evaluated as `1 - (1-x)(1-y)(1-z)`, which is algebraically identical and
/// keeps the result inside `[0, 1]` without rounding past the boundaries.
pub fn prob_sum(x: Scalar01, y: Scalar01, z: Scalar01) -> Scalar01 {
    Scalar01(prob_sum_raw(x.0, y.0, z.0))
}

#[inline]
pub fn prob_sum_raw(x: f64, y: f64, z: f64) -> f64 {
    1.0 - (1.0 - x) * (1.0 - y) * (1.0 - z)
}

/// Partial derivatives of [`prob_sum_raw`] with respect to each argument.
#[inline]
pub fn prob_sum_grad(x: f64, y: f64, z: f64) -> [f64; 3] {
    [
        (1.0 - y) * (1.0 - z),
        (1.0 - x) * (1.0 - z),
        (1.0 - x) * (1.0 - y),
    ]
}

/// Soft minimum/maximum: a convex combination whose weights are a softmax
/// over `sign * beta * v`, so sharpness grows with `beta`.
pub fn attention_aggregate(values: &[f64], beta: f64, mode: AggregationMode) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("attention_aggregate values"));
    }
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::NotPositive("beta", beta));
    }
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite("attention_aggregate values"));
        }
    }
    let mut weights = vec![0.0; values.len()];
    Ok(attention_aggregate_raw(values, beta, mode, &mut weights))
}

/// Aggregation kernel; writes the attention weights into `weights_out`.
#[inline]
pub fn attention_aggregate_raw(
    values: &[f64],
    beta: f64,
    mode: AggregationMode,
    weights_out: &mut [f64],
) -> f64 {
    let s = mode.sign() * beta;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        hi = hi.max(s * v);
    }
    let mut sum = 0.0;
    for (w, &v) in weights_out.iter_mut().zip(values) {
        *w = (s * v - hi).exp();
        sum += *w;
    }
    let mut out = 0.0;
    for (w, &v) in weights_out.iter_mut().zip(values) {
        *w /= sum;
        out += *w * v;
    }
    out
}

/// Gradient of the attention aggregate with respect to each input value:
/// `d out / d v_k = alpha_k + sign * beta * alpha_k * (v_k - out)`.
#[inline]
pub fn attention_aggregate_grad(
    values: &[f64],
    weights: &[f64],
    out: f64,
    beta: f64,
    mode: AggregationMode,
    grad_out: &mut [f64],
) {
    let s = mode.sign() * beta;
    for ((g, &w), &v) in grad_out.iter_mut().zip(weights).zip(values) {
        *g = w * (1.0 + s * (v - out));
    }
}

/// Sharpened logistic `1 / (1 + exp(-lambda * (x - gamma)))`.
pub fn sharp_sigmoid(x: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("sharp_sigmoid input"));
    }
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::NotPositive("lambda", lambda));
    }
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::OutOfRange("gamma", "(0, 1)", gamma));
    }
    Ok(sharp_sigmoid_raw(x, lambda, gamma))
}

#[inline]
pub fn sharp_sigmoid_raw(x: f64, lambda: f64, gamma: f64) -> f64 {
    sigmoid(lambda * (x - gamma))
}

/// Derivative of the sharpened sigmoid given its output value.
#[inline]
pub fn sharp_sigmoid_grad(output: f64, lambda: f64) -> f64 {
    lambda * output * (1.0 - output)
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Default step for central finite differences.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error floor: coordinates whose gradient magnitude is below this
/// are compared at this scale instead, so finite-difference roundoff on
/// near-zero entries does not register as error.
pub const FD_REL_FLOOR: f64 = 1e-3;

/// Central finite-difference gradient of a scalar function at `point`.
pub fn central_difference<F>(f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = vec![0.0; point.len()];
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Worst relative error between an analytic gradient and central finite
/// differences of `f` at `point`. Relative error uses denominator
/// `max(|analytic|, |numeric|, FD_REL_FLOOR)`.
pub fn grad_check<F>(f: F, analytic: &[f64], point: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let numeric = central_difference(f, point, h);
    max_rel_error(analytic, &numeric)
}

/// Worst per-coordinate relative error between two gradient vectors.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(FD_REL_FLOOR))
        .fold(0.0, f64::max)
}
