//! Forward pass of the rule network and its hand-derived backward pass.
//!
//! The network maps an example's body-predicate valuations to a head
//! probability through a fixed graph: per-slot softmax over the three
//! subpredicate choices, prob-sum soft valuation, attention (or product)
//! conjunction per subrule, a sharpened sigmoid, attention (or product)
//! disjunction across subrules, and a final sharpened sigmoid. All
//! intermediates are cached in a [`ForwardTrace`] for the backward pass.

use crate::diffcore::{
    attention_aggregate_grad, attention_aggregate_raw, prob_sum_grad, prob_sum_raw,
    sharp_sigmoid_grad, sharp_sigmoid_raw, softmax3_raw, softmax3_vjp, AggregationMode, ProbTriple,
    Scalar01,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How conjunction and disjunction are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpMode {
    /// Softmin attention for AND, softmax attention for OR.
    Attention,
    /// Product t-norm for AND, probabilistic sum for OR (ablation variant).
    Product,
}

impl std::str::FromStr for OpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "attention" => Ok(OpMode::Attention),
            "product" => Ok(OpMode::Product),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

/// Sharpness hyperparameters of the logical network.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActivationParams {
    /// Attention sharpness.
    pub beta: f64,
    /// Sigmoid sharpening factor.
    pub lambda: f64,
    /// Sigmoid midpoint.
    pub gamma: f64,
}

impl Default for ActivationParams {
    fn default() -> Self {
        Self {
            beta: 20.0,
            lambda: 10.0,
            gamma: 0.5,
        }
    }
}

impl ActivationParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 || !self.beta.is_finite() {
            return Err(Error::NotPositive("beta", self.beta));
        }
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(Error::NotPositive("lambda", self.lambda));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::OutOfRange("gamma", "(0, 1)", self.gamma));
        }
        Ok(())
    }
}

/// The trainable tensor: one 3-way logit vector per (subrule, body atom) slot.
///
/// Layout is row-major `[subrule][atom][choice]` with choices ordered
/// (positive literal, negated literal, exclusion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSpaceWeights {
    n: usize,
    m: usize,
    w: Vec<f64>,
}

impl RuleSpaceWeights {
    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::EmptyInput("RuleSpaceWeights dimensions"));
        }
        Ok(Self {
            n,
            m,
            w: vec![0.0; n * m * 3],
        })
    }

    pub fn from_vec(n: usize, m: usize, w: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::EmptyInput("RuleSpaceWeights dimensions"));
        }
        if w.len() != n * m * 3 {
            return Err(Error::ShapeMismatch {
                context: "RuleSpaceWeights::from_vec",
                expected: n * m * 3,
                got: w.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("RuleSpaceWeights"));
        }
        Ok(Self { n, m, w })
    }

    /// Builds weights whose softmax puts almost all mass on one choice per slot.
    /// `choice[i][j]` selects 0 (positive), 1 (negated) or 2 (exclusion).
    pub fn one_hot(n: usize, m: usize, choice: &[usize], magnitude: f64) -> Result<Self> {
        if choice.len() != n * m {
            return Err(Error::ShapeMismatch {
                context: "RuleSpaceWeights::one_hot",
                expected: n * m,
                got: choice.len(),
            });
        }
        let mut out = Self::zeros(n, m)?;
        for (slot, &k) in choice.iter().enumerate() {
            out.w[slot * 3 + k] = magnitude;
        }
        Ok(out)
    }

    pub fn subrules(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.w
    }

    #[inline]
    pub fn logits(&self, i: usize, j: usize) -> [f64; 3] {
        let base = (i * self.m + j) * 3;
        [self.w[base], self.w[base + 1], self.w[base + 2]]
    }

    /// Softmax of every slot, laid out like the weights.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.w.len()];
        for slot in 0..self.n * self.m {
            let q = softmax3_raw([
                self.w[slot * 3],
                self.w[slot * 3 + 1],
                self.w[slot * 3 + 2],
            ]);
            p[slot * 3..slot * 3 + 3].copy_from_slice(&q);
        }
        p
    }
}

/// One training row: `m` valuations in `[0, 1]` plus a binary head label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    valuations: Vec<f64>,
    label: u8,
}

impl Example {
    pub fn new(valuations: Vec<f64>, label: u8) -> Result<Self> {
        if valuations.is_empty() {
            return Err(Error::EmptyInput("Example valuations"));
        }
        for &v in &valuations {
            if !v.is_finite() {
                return Err(Error::NonFinite("Example valuation"));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfUnitRange {
                    context: "Example valuation",
                    value: v,
                });
            }
        }
        if label > 1 {
            return Err(Error::OutOfRange("label", "{0, 1}", label as f64));
        }
        Ok(Self { valuations, label })
    }

    pub fn valuations(&self) -> &[f64] {
        &self.valuations
    }

    pub fn label(&self) -> u8 {
        self.label
    }
}

/// Gradient with the shape of [`RuleSpaceWeights`].
#[derive(Debug, Clone)]
pub struct WeightGrad {
    n: usize,
    m: usize,
    g: Vec<f64>,
}

impl WeightGrad {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            g: vec![0.0; n * m * 3],
        }
    }

    pub fn subrules(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.g
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.g
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &WeightGrad, scale: f64) {
        debug_assert_eq!(self.g.len(), other.g.len());
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += scale * b;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.g.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for x in &mut self.g {
            *x *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().all(|x| x.is_finite())
    }
}

/// Cached intermediates from one batched forward pass.
///
/// The borrow checker keeps a trace valid for as long as it is readable, so
/// `backward` can run on a shared reference; replaying it is deterministic.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    n: usize,
    m: usize,
    batch: usize,
    params: ActivationParams,
    mode: OpMode,
    /// Softmax probabilities per slot, `n*m*3`, shared across the batch.
    probs: Vec<f64>,
    /// Input valuations, `batch*m`.
    vals: Vec<f64>,
    /// Soft valuations per example and slot, `batch*n*m`.
    soft: Vec<f64>,
    /// Conjunction attention weights, `batch*n*m` (attention mode only).
    conj_w: Vec<f64>,
    /// Conjunction outputs per subrule, `batch*n`.
    conj: Vec<f64>,
    /// Sigmoid-sharpened subrule outputs, `batch*n`.
    sub_out: Vec<f64>,
    /// Disjunction attention weights, `batch*n` (attention mode only).
    dis_w: Vec<f64>,
    /// Disjunction output per example.
    dis: Vec<f64>,
    /// Final head probability per example.
    pred: Vec<f64>,
}

impl ForwardTrace {
    pub fn predictions(&self) -> &[f64] {
        &self.pred
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn batch_len(&self) -> usize {
        self.batch
    }

    pub fn subrules(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> usize {
        self.m
    }

    pub fn disjunction(&self, e: usize) -> f64 {
        self.dis[e]
    }

    pub fn conjunction(&self, e: usize, i: usize) -> f64 {
        self.conj[e * self.n + i]
    }

    pub fn soft_valuation(&self, e: usize, i: usize, j: usize) -> f64 {
        self.soft[(e * self.n + i) * self.m + j]
    }
}

/// Soft valuation of one slot: prob-sum of the weighted subpredicate values
/// `(p1*b, p2*(1-b), p3)`.
pub fn soft_valuation(p: ProbTriple, b: Scalar01) -> Scalar01 {
    let q = p.get();
    let v = b.get();
    Scalar01::new(soft_valuation_raw(q, v)).expect("prob-sum stays in [0,1]")
}

#[inline]
pub fn soft_valuation_raw(p: [f64; 3], b: f64) -> f64 {
    prob_sum_raw(p[0] * b, p[1] * (1.0 - b), p[2])
}

/// Runs the network over a batch, caching everything the backward pass needs.
pub fn forward(
    weights: &RuleSpaceWeights,
    batch: &[Example],
    params: ActivationParams,
    mode: OpMode,
) -> Result<ForwardTrace> {
    params.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyInput("forward batch"));
    }
    let n = weights.subrules();
    let m = weights.atoms();
    for ex in batch {
        if ex.valuations().len() != m {
            return Err(Error::ShapeMismatch {
                context: "forward example width",
                expected: m,
                got: ex.valuations().len(),
            });
        }
    }
    let b_len = batch.len();
    let probs = weights.probabilities();
    let mut trace = ForwardTrace {
        n,
        m,
        batch: b_len,
        params,
        mode,
        probs,
        vals: vec![0.0; b_len * m],
        soft: vec![0.0; b_len * n * m],
        conj_w: vec![0.0; b_len * n * m],
        conj: vec![0.0; b_len * n],
        sub_out: vec![0.0; b_len * n],
        dis_w: vec![0.0; b_len * n],
        dis: vec![0.0; b_len],
        pred: vec![0.0; b_len],
    };

    for (e, ex) in batch.iter().enumerate() {
        trace.vals[e * m..(e + 1) * m].copy_from_slice(ex.valuations());
        for i in 0..n {
            let row = (e * n + i) * m;
            for j in 0..m {
                let p = &trace.probs[(i * m + j) * 3..(i * m + j) * 3 + 3];
                trace.soft[row + j] =
                    soft_valuation_raw([p[0], p[1], p[2]], ex.valuations()[j]);
            }
            let conj = match mode {
                OpMode::Attention => attention_aggregate_raw(
                    &trace.soft[row..row + m],
                    params.beta,
                    AggregationMode::Min,
                    &mut trace.conj_w[row..row + m],
                ),
                OpMode::Product => trace.soft[row..row + m].iter().product(),
            };
            trace.conj[e * n + i] = conj;
            trace.sub_out[e * n + i] = sharp_sigmoid_raw(conj, params.lambda, params.gamma);
        }
        let subs = &trace.sub_out[e * n..(e + 1) * n];
        let dis = match mode {
            OpMode::Attention => attention_aggregate_raw(
                subs,
                params.beta,
                AggregationMode::Max,
                &mut trace.dis_w[e * n..(e + 1) * n],
            ),
            OpMode::Product => 1.0 - subs.iter().map(|h| 1.0 - h).product::<f64>(),
        };
        trace.dis[e] = dis;
        trace.pred[e] = sharp_sigmoid_raw(dis, params.lambda, params.gamma);
    }
    Ok(trace)
}

/// Propagates per-example upstream gradients `d loss / d prediction` back to
/// the slot probabilities, summing over the batch. Returns an `n*m*3` vector.
pub fn backward_to_probs(trace: &ForwardTrace, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != trace.batch {
        return Err(Error::ShapeMismatch {
            context: "backward upstream length",
            expected: trace.batch,
            got: upstream.len(),
        });
    }
    let (n, m) = (trace.n, trace.m);
    let lambda = trace.params.lambda;
    let beta = trace.params.beta;
    let mut dp = vec![0.0; n * m * 3];
    let mut d_sub = vec![0.0; n];
    let mut d_soft = vec![0.0; m];

    for e in 0..trace.batch {
        let d_dis = upstream[e] * sharp_sigmoid_grad(trace.pred[e], lambda);
        let subs = &trace.sub_out[e * n..(e + 1) * n];
        match trace.mode {
            OpMode::Attention => {
                attention_aggregate_grad(
                    subs,
                    &trace.dis_w[e * n..(e + 1) * n],
                    trace.dis[e],
                    beta,
                    AggregationMode::Max,
                    &mut d_sub,
                );
                for g in &mut d_sub {
                    *g *= d_dis;
                }
            }
            OpMode::Product => {
                for i in 0..n {
                    let mut others = 1.0;
                    for (l, &h) in subs.iter().enumerate() {
                        if l != i {
                            others *= 1.0 - h;
                        }
                    }
                    d_sub[i] = d_dis * others;
                }
            }
        }

        for i in 0..n {
            let d_conj =
                d_sub[i] * sharp_sigmoid_grad(trace.sub_out[e * n + i], lambda);
            let row = (e * n + i) * m;
            let soft = &trace.soft[row..row + m];
            match trace.mode {
                OpMode::Attention => {
                    attention_aggregate_grad(
                        soft,
                        &trace.conj_w[row..row + m],
                        trace.conj[e * n + i],
                        beta,
                        AggregationMode::Min,
                        &mut d_soft,
                    );
                    for g in &mut d_soft {
                        *g *= d_conj;
                    }
                }
                OpMode::Product => {
                    for j in 0..m {
                        let mut others = 1.0;
                        for (l, &s) in soft.iter().enumerate() {
                            if l != j {
                                others *= s;
                            }
                        }
                        d_soft[j] = d_conj * others;
                    }
                }
            }

            for j in 0..m {
                let b = trace.vals[e * m + j];
                let slot = (i * m + j) * 3;
                let p = &trace.probs[slot..slot + 3];
                let fg = prob_sum_grad(p[0] * b, p[1] * (1.0 - b), p[2]);
                dp[slot] += d_soft[j] * fg[0] * b;
                dp[slot + 1] += d_soft[j] * fg[1] * (1.0 - b);
                dp[slot + 2] += d_soft[j] * fg[2];
            }
        }
    }
    Ok(dp)
}

/// Converts a gradient with respect to slot probabilities into a gradient
/// with respect to the underlying logits via the softmax Jacobian.
pub fn prob_grad_to_weight_grad(probs: &[f64], dp: &[f64], n: usize, m: usize) -> WeightGrad {
    debug_assert_eq!(probs.len(), n * m * 3);
    debug_assert_eq!(dp.len(), n * m * 3);
    let mut grad = WeightGrad::zeros(n, m);
    for slot in 0..n * m {
        let p = [probs[slot * 3], probs[slot * 3 + 1], probs[slot * 3 + 2]];
        let up = [dp[slot * 3], dp[slot * 3 + 1], dp[slot * 3 + 2]];
        let g = softmax3_vjp(p, up);
        grad.as_mut_slice()[slot * 3..slot * 3 + 3].copy_from_slice(&g);
    }
    grad
}

/// Full backward pass: upstream prediction gradients to weight gradients.
pub fn backward(trace: &ForwardTrace, upstream: &[f64]) -> Result<WeightGrad> {
    let dp = backward_to_probs(trace, upstream)?;
    Ok(prob_grad_to_weight_grad(
        &trace.probs,
        &dp,
        trace.n,
        trace.m,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, FD_STEP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ActivationParams {
        ActivationParams::default()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn soft_valuation_identity_choice_yields_one() {
        // exclusion selected: prob-sum(0, 0, 1) = 1
        assert_close(soft_valuation_raw([0.0, 0.0, 1.0], 0.3), 1.0, 1e-15);
    }

    #[test]
    fn soft_valuation_positive_choice_passes_value_through() {
        assert_close(soft_valuation_raw([1.0, 0.0, 0.0], 0.7), 0.7, 1e-15);
    }

    #[test]
    fn soft_valuation_uniform_case() {
        let v = soft_valuation_raw([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.5);
        assert_close(v, 1.0 - (5.0 / 6.0) * (5.0 / 6.0) * (2.0 / 3.0), 1e-15);
        assert_close(v, 0.5370, 1e-4);
    }

    #[test]
    fn forward_all_identity_weights_is_constant() {
        let n = 2;
        let m = 4;
        let w = RuleSpaceWeights::one_hot(n, m, &vec![2; n * m], 50.0).unwrap();
        let batch = vec![
            Example::new(vec![0.1, 0.9, 0.4, 0.7], 1).unwrap(),
            Example::new(vec![0.8, 0.2, 0.6, 0.3], 0).unwrap(),
        ];
        let trace = forward(&w, &batch, params(), OpMode::Attention).unwrap();
        for &p in trace.predictions() {
            assert_close(p, 0.9928, 2e-4);
        }
        assert_close(
            trace.predictions()[0],
            trace.predictions()[1],
            1e-12,
        );
    }

    #[test]
    fn forward_single_slot_chain() {
        // n=1, m=1, P one-hot positive, b=1: conj=1, sub=sigma(5), p ~ 0.9928
        let w = RuleSpaceWeights::one_hot(1, 1, &[0], 60.0).unwrap();
        let batch = vec![Example::new(vec![1.0], 1).unwrap()];
        let trace = forward(&w, &batch, params(), OpMode::Attention).unwrap();
        assert_close(trace.conjunction(0, 0), 1.0, 1e-9);
        assert_close(trace.predictions()[0], 0.9928, 2e-4);
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let w = RuleSpaceWeights::zeros(1, 3).unwrap();
        let batch = vec![Example::new(vec![0.5, 0.5], 0).unwrap()];
        assert!(forward(&w, &batch, params(), OpMode::Attention).is_err());
    }

    #[test]
    fn predictions_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=6);
            let w = RuleSpaceWeights::from_vec(
                n,
                m,
                (0..n * m * 3).map(|_| rng.gen_range(-30.0..30.0)).collect(),
            )
            .unwrap();
            let ex = Example::new(
                (0..m).map(|_| rng.gen_range(0.0..=1.0)).collect(),
                0,
            )
            .unwrap();
            let trace = forward(&w, &[ex], params(), OpMode::Attention).unwrap();
            let p = trace.predictions()[0];
            assert!(p > 0.0 && p < 1.0, "p = {p}");
        }
    }

    #[test]
    fn permuting_subrules_leaves_prediction_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, m) = (3, 4);
        let flat: Vec<f64> = (0..n * m * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w = RuleSpaceWeights::from_vec(n, m, flat.clone()).unwrap();
        // rotate subrule rows
        let mut rotated = vec![0.0; flat.len()];
        for i in 0..n {
            let src = i * m * 3;
            let dst = ((i + 1) % n) * m * 3;
            rotated[dst..dst + m * 3].copy_from_slice(&flat[src..src + m * 3]);
        }
        let w2 = RuleSpaceWeights::from_vec(n, m, rotated).unwrap();
        let ex = Example::new(vec![0.3, 0.8, 0.1, 0.6], 1).unwrap();
        for mode in [OpMode::Attention, OpMode::Product] {
            let p1 = forward(&w, &[ex.clone()], params(), mode).unwrap().pred[0];
            let p2 = forward(&w2, &[ex.clone()], params(), mode).unwrap().pred[0];
            assert_close(p1, p2, 1e-12);
        }
    }

    #[test]
    fn permuting_atoms_jointly_leaves_prediction_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, m) = (2, 5);
        let flat: Vec<f64> = (0..n * m * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let vals: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let perm = [3usize, 0, 4, 1, 2];
        let mut flat_p = vec![0.0; flat.len()];
        let mut vals_p = vec![0.0; m];
        for (jp, &j) in perm.iter().enumerate() {
            vals_p[jp] = vals[j];
            for i in 0..n {
                let src = (i * m + j) * 3;
                let dst = (i * m + jp) * 3;
                flat_p[dst..dst + 3].copy_from_slice(&flat[src..src + 3]);
            }
        }
        let w = RuleSpaceWeights::from_vec(n, m, flat).unwrap();
        let w2 = RuleSpaceWeights::from_vec(n, m, flat_p).unwrap();
        let e1 = Example::new(vals, 1).unwrap();
        let e2 = Example::new(vals_p, 1).unwrap();
        let p1 = forward(&w, &[e1], params(), OpMode::Attention).unwrap().pred[0];
        let p2 = forward(&w2, &[e2], params(), OpMode::Attention).unwrap().pred[0];
        assert_close(p1, p2, 1e-12);
    }

    #[test]
    fn product_mode_conjunction_is_exact_product() {
        let w = RuleSpaceWeights::one_hot(1, 2, &[0, 0], 60.0).unwrap();
        let ex = Example::new(vec![0.6, 0.7], 1).unwrap();
        let tr = forward(&w, &[ex.clone()], params(), OpMode::Product).unwrap();
        assert_close(tr.conjunction(0, 0), 0.42, 1e-9);
        let ta = forward(&w, &[ex], params(), OpMode::Attention).unwrap();
        assert!(ta.conjunction(0, 0) >= 0.6 - 1e-9);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let w = RuleSpaceWeights::zeros(2, 3).unwrap();
        let batch = vec![Example::new(vec![0.2, 0.5, 0.9], 1).unwrap()];
        let trace = forward(&w, &batch, params(), OpMode::Attention).unwrap();
        let grad = backward(&trace, &[0.0]).unwrap();
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [OpMode::Attention, OpMode::Product] {
            let (n, m, batch_len) = (3, 6, 16);
            let flat: Vec<f64> = (0..n * m * 3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let w = RuleSpaceWeights::from_vec(n, m, flat.clone()).unwrap();
            let batch: Vec<Example> = (0..batch_len)
                .map(|k| {
                    Example::new(
                        (0..m).map(|_| rng.gen_range(0.02..0.98)).collect(),
                        (k % 2) as u8,
                    )
                    .unwrap()
                })
                .collect();
            let upstream: Vec<f64> = (0..batch_len).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let trace = forward(&w, &batch, params(), mode).unwrap();
            let grad = backward(&trace, &upstream).unwrap();

            let f = |x: &[f64]| {
                let wx = RuleSpaceWeights::from_vec(n, m, x.to_vec()).unwrap();
                let t = forward(&wx, &batch, params(), mode).unwrap();
                t.predictions()
                    .iter()
                    .zip(&upstream)
                    .map(|(p, u)| p * u)
                    .sum()
            };
            let err = grad_check(f, grad.as_slice(), &flat, FD_STEP);
            assert!(err < 1e-4, "{mode:?}: rel err {err}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let w = RuleSpaceWeights::from_vec(
            2,
            3,
            vec![
                0.3, -0.2, 0.7, 1.1, 0.0, -0.4, 0.9, 0.2, -1.3, 0.5, 0.5, 0.5, -0.7, 0.1, 0.2,
                0.8, -0.3, 0.4,
            ],
        )
        .unwrap();
        let batch = vec![Example::new(vec![0.25, 0.5, 0.75], 1).unwrap()];
        let a = forward(&w, &batch, params(), OpMode::Attention).unwrap();
        let b = forward(&w, &batch, params(), OpMode::Attention).unwrap();
        assert_eq!(a.predictions(), b.predictions());
    }
}
