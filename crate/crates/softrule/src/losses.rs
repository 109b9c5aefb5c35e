//! Semantic and syntactic loss terms, their gradients, the combined
//! objective, and the progressive coefficient scheduler.
//!
//! Semantic terms: binary cross-entropy on head predictions, entropy of the
//! subpredicate distributions, and pairwise cosine similarity between
//! subrule weight vectors. Syntactic terms act on the expected variable
//! usage counts: range restriction (head variables appear in the body),
//! connectedness (auxiliary variables appear twice or not at all) and
//! digitization (usage counts near integers).

use crate::diffcore::softmax3_vjp;
use crate::error::{Error, Result};
use crate::rule_model::{
    backward_to_probs, forward, ActivationParams, Example, ForwardTrace, OpMode, RuleSpaceWeights,
    WeightGrad,
};
use serde::{Deserialize, Serialize};

/// Floor applied to prediction probabilities before taking logs.
pub const BCE_CLAMP: f64 = 1e-12;
/// Floor applied to subrule weight-vector norms in the similarity loss.
pub const NORM_FLOOR: f64 = 1e-12;

/// Scalar coefficients of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_e: f64,
    pub lambda_s: f64,
    pub lambda_r: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
    /// Over-inclusion slope of the range-restricted loss.
    pub eta: f64,
    /// Bell height of the connected loss.
    pub c1: f64,
    /// Bell width of the connected loss.
    pub c2: f64,
    /// Log floor of the entropy loss.
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_e: 0.1,
            lambda_s: 0.2,
            lambda_r: 1.0,
            lambda_c: 5.0,
            lambda_d: 0.001,
            eta: 0.1,
            c1: 1.0,
            c2: 12.5,
            epsilon: 1e-6,
        }
    }
}

/// Maxima and horizon for the progressive coefficient schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub lambda_e_max: f64,
    pub lambda_s_max: f64,
    pub lambda_s_min: f64,
    pub lambda_r_max: f64,
    pub lambda_c_max: f64,
    pub lambda_d_max: f64,
    /// Total training epochs.
    pub total_epochs: usize,
    /// Number of head variables of the schema.
    pub head_vars: usize,
    /// Number of auxiliary variables of the schema.
    pub aux_vars: usize,
    /// Current subrule count.
    pub subrules: usize,
}

/// Coefficient values at one training epoch. The structural terms are scaled
/// by the head / auxiliary variable counts and subrule count; with no
/// variables of the relevant kind the coefficient is zero.
///
/// Returns a [`LossWeights`] whose non-coefficient fields keep their defaults.
pub fn schedule(t: usize, cfg: &ScheduleConfig) -> Result<LossWeights> {
    if cfg.total_epochs == 0 {
        return Err(Error::NotPositive("total_epochs", 0.0));
    }
    if t > cfg.total_epochs {
        return Err(Error::EpochOutOfRange {
            t,
            total: cfg.total_epochs,
        });
    }
    let rho = t as f64 / cfg.total_epochs as f64;
    let rho2 = rho * rho;
    let n = cfg.subrules.max(1) as f64;
    let mut lw = LossWeights::default();
    lw.lambda_e = rho * cfg.lambda_e_max;
    lw.lambda_s = cfg.lambda_s_max - rho2 * (cfg.lambda_s_max - cfg.lambda_s_min);
    lw.lambda_r = if cfg.head_vars == 0 {
        0.0
    } else {
        rho2 / (cfg.head_vars as f64 * n) * cfg.lambda_r_max
    };
    lw.lambda_c = if cfg.aux_vars == 0 {
        0.0
    } else {
        rho2 / (cfg.aux_vars as f64 * n) * cfg.lambda_c_max
    };
    lw.lambda_d = rho2 * cfg.lambda_d_max;
    Ok(lw)
}

/// Which variables occur in which body atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    /// `atoms x var_count` indicator, row-major: 1 if variable k occurs in atom j.
    indicator: Vec<u8>,
    head_vars: Vec<usize>,
    aux_vars: Vec<usize>,
    atoms: usize,
    var_count: usize,
}

impl VariableLayout {
    pub fn new(
        atoms: usize,
        var_count: usize,
        indicator: Vec<u8>,
        head_vars: Vec<usize>,
        aux_vars: Vec<usize>,
    ) -> Result<Self> {
        if indicator.len() != atoms * var_count {
            return Err(Error::ShapeMismatch {
                context: "VariableLayout indicator",
                expected: atoms * var_count,
                got: indicator.len(),
            });
        }
        if indicator.iter().any(|&x| x > 1) {
            return Err(Error::OutOfRange("indicator entry", "{0, 1}", 2.0));
        }
        for &k in head_vars.iter().chain(&aux_vars) {
            if k >= var_count {
                return Err(Error::ShapeMismatch {
                    context: "VariableLayout variable index",
                    expected: var_count,
                    got: k,
                });
            }
        }
        Ok(Self {
            indicator,
            head_vars,
            aux_vars,
            atoms,
            var_count,
        })
    }

    /// Layout of a propositional schema: no variables at all.
    pub fn propositional(atoms: usize) -> Self {
        Self {
            indicator: Vec::new(),
            head_vars: Vec::new(),
            aux_vars: Vec::new(),
            atoms,
            var_count: 0,
        }
    }

    #[inline]
    pub fn contains(&self, atom: usize, var: usize) -> bool {
        self.indicator[atom * self.var_count + var] == 1
    }

    pub fn head_vars(&self) -> &[usize] {
        &self.head_vars
    }

    pub fn aux_vars(&self) -> &[usize] {
        &self.aux_vars
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }
}

/// Expected usage count of each variable per subrule:
/// `M[i][k] = sum_j (1 - p3_ij) * V[j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableUsage {
    subrules: usize,
    var_count: usize,
    counts: Vec<f64>,
}

impl VariableUsage {
    pub fn from_value(subrules: usize, var_count: usize, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != subrules * var_count {
            return Err(Error::ShapeMismatch {
                context: "VariableUsage counts",
                expected: subrules * var_count,
                got: counts.len(),
            });
        }
        Ok(Self {
            subrules,
            var_count,
            counts,
        })
    }

    #[inline]
    pub fn get(&self, subrule: usize, var: usize) -> f64 {
        self.counts[subrule * self.var_count + var]
    }

    pub fn subrules(&self) -> usize {
        self.subrules
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }
}

/// Binary cross-entropy, summed over the batch.
pub fn bce(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "bce batch",
            expected: predictions.len(),
            got: labels.len(),
        });
    }
    let mut total = 0.0;
    for (&p, &h) in predictions.iter().zip(labels) {
        if h > 1 {
            return Err(Error::OutOfRange("label", "{0, 1}", h as f64));
        }
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total += if h == 1 { -p.ln() } else { -(1.0 - p).ln() };
    }
    Ok(total)
}

/// Gradient of [`bce`] with respect to each prediction.
pub fn bce_grad(predictions: &[f64], labels: &[u8]) -> Vec<f64> {
    predictions
        .iter()
        .zip(labels)
        .map(|(&p, &h)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if h == 1 {
                -1.0 / p
            } else {
                1.0 / (1.0 - p)
            }
        })
        .collect()
}

/// Shannon entropy of all slot distributions: `-sum p ln(p + eps)`.
pub fn entropy_loss(probs: &[f64], epsilon: f64) -> f64 {
    probs.iter().map(|&p| -p * (p + epsilon).ln()).sum()
}

/// Gradient of [`entropy_loss`] with respect to each probability entry.
pub fn entropy_grad(probs: &[f64], epsilon: f64) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| -((p + epsilon).ln() + p / (p + epsilon)))
        .collect()
}

/// Mean pairwise cosine similarity between flattened subrule weight vectors,
/// normalized by `2 / (n (n + 1))`.
pub fn similarity_loss(weights: &RuleSpaceWeights) -> f64 {
    let n = weights.subrules();
    if n < 2 {
        return 0.0;
    }
    let row = weights.atoms() * 3;
    let w = weights.as_slice();
    let norms: Vec<f64> = (0..n)
        .map(|i| {
            w[i * row..(i + 1) * row]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(NORM_FLOOR)
        })
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = w[i * row..(i + 1) * row]
                .iter()
                .zip(&w[j * row..(j + 1) * row])
                .map(|(a, b)| a * b)
                .sum();
            total += dot / (norms[i] * norms[j]);
        }
    }
    2.0 / (n as f64 * (n + 1) as f64) * total
}

/// Gradient of [`similarity_loss`] with respect to the raw weights.
pub fn similarity_grad(weights: &RuleSpaceWeights) -> WeightGrad {
    let n = weights.subrules();
    let m = weights.atoms();
    let mut grad = WeightGrad::zeros(n, m);
    if n < 2 {
        return grad;
    }
    let row = m * 3;
    let w = weights.as_slice();
    let norms: Vec<f64> = (0..n)
        .map(|i| {
            w[i * row..(i + 1) * row]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(NORM_FLOOR)
        })
        .collect();
    let scale = 2.0 / (n as f64 * (n + 1) as f64);
    let g = grad.as_mut_slice();
    for i in 0..n {
        for j in i + 1..n {
            let wi = &w[i * row..(i + 1) * row];
            let wj = &w[j * row..(j + 1) * row];
            let dot: f64 = wi.iter().zip(wj).map(|(a, b)| a * b).sum();
            let cos = dot / (norms[i] * norms[j]);
            for t in 0..row {
                g[i * row + t] +=
                    scale * (wj[t] / (norms[i] * norms[j]) - cos * wi[t] / (norms[i] * norms[i]));
                g[j * row + t] +=
                    scale * (wi[t] / (norms[i] * norms[j]) - cos * wj[t] / (norms[j] * norms[j]));
            }
        }
    }
    grad
}

/// Expected variable usage counts from slot probabilities.
pub fn variable_usage(
    probs: &[f64],
    subrules: usize,
    atoms: usize,
    layout: &VariableLayout,
) -> Result<VariableUsage> {
    if layout.atoms() != atoms {
        return Err(Error::ShapeMismatch {
            context: "variable_usage atoms",
            expected: atoms,
            got: layout.atoms(),
        });
    }
    if probs.len() != subrules * atoms * 3 {
        return Err(Error::ShapeMismatch {
            context: "variable_usage probs",
            expected: subrules * atoms * 3,
            got: probs.len(),
        });
    }
    let kc = layout.var_count();
    let mut counts = vec![0.0; subrules * kc];
    for i in 0..subrules {
        for j in 0..atoms {
            let inclusion = 1.0 - probs[(i * atoms + j) * 3 + 2];
            for k in 0..kc {
                if layout.contains(j, k) {
                    counts[i * kc + k] += inclusion;
                }
            }
        }
    }
    VariableUsage::from_value(subrules, kc, counts)
}

/// Range-restricted penalty on head variables: quadratic below one expected
/// occurrence, linear with slope `eta` above.
pub fn range_loss(usage: &VariableUsage, head_vars: &[usize], eta: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..usage.subrules() {
        for &k in head_vars {
            let m = usage.get(i, k);
            total += if m < 1.0 {
                (m - 1.0) * (m - 1.0)
            } else {
                eta * (m - 1.0)
            };
        }
    }
    total
}

fn range_loss_grad_m(m: f64, eta: f64) -> f64 {
    if m < 1.0 {
        2.0 * (m - 1.0)
    } else {
        eta
    }
}

/// Connectedness penalty on auxiliary variables: a bell centered at one
/// occurrence below two, quadratic above two.
pub fn connected_loss(usage: &VariableUsage, aux_vars: &[usize], c1: f64, c2: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..usage.subrules() {
        for &k in aux_vars {
            let m = usage.get(i, k);
            total += if m < 2.0 {
                c1 * (-c2 * (m - 1.0) * (m - 1.0)).exp()
            } else {
                (m - 2.0) * (m - 2.0)
            };
        }
    }
    total
}

fn connected_loss_grad_m(m: f64, c1: f64, c2: f64) -> f64 {
    if m < 2.0 {
        let d = m - 1.0;
        c1 * (-c2 * d * d).exp() * (-2.0 * c2 * d)
    } else {
        2.0 * (m - 2.0)
    }
}

/// Integer-usage penalty, averaged over every (subrule, variable) pair:
/// `(1 - sin(2 pi M + pi/2)) / 2`, zero exactly at integers.
pub fn digitization_loss(usage: &VariableUsage) -> f64 {
    let cells = usage.subrules() * usage.var_count();
    if cells == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..usage.subrules() {
        for k in 0..usage.var_count() {
            let m = usage.get(i, k);
            total += 0.5 * (1.0 - (2.0 * std::f64::consts::PI * m + std::f64::consts::FRAC_PI_2).sin());
        }
    }
    total / cells as f64
}

fn digitization_grad_m(m: f64, cells: usize) -> f64 {
    let arg = 2.0 * std::f64::consts::PI * m + std::f64::consts::FRAC_PI_2;
    -std::f64::consts::PI * arg.cos() / cells as f64
}

/// Per-term values of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub entropy: f64,
    pub similarity: f64,
    pub range: f64,
    pub connected: f64,
    pub digitization: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn weighted_total(&self, lw: &LossWeights) -> f64 {
        self.bce
            + lw.lambda_e * self.entropy
            + lw.lambda_s * self.similarity
            + lw.lambda_r * self.range
            + lw.lambda_c * self.connected
            + lw.lambda_d * self.digitization
    }
}

/// Evaluates the full objective and its gradient with respect to the weights.
///
/// The BCE path runs through the network; the remaining terms depend on the
/// weights alone. Gradients of probability-space terms merge before a single
/// softmax Jacobian application per slot.
pub fn total_loss_and_grad(
    weights: &RuleSpaceWeights,
    batch: &[Example],
    layout: &VariableLayout,
    act: ActivationParams,
    mode: OpMode,
    lw: &LossWeights,
) -> Result<(LossBreakdown, WeightGrad)> {
    let trace = forward(weights, batch, act, mode)?;
    total_loss_and_grad_with_trace(weights, &trace, batch, layout, layout_labels(batch), lw)
}

fn layout_labels(batch: &[Example]) -> Vec<u8> {
    batch.iter().map(|e| e.label()).collect()
}

/// Same as [`total_loss_and_grad`] but reuses an existing forward trace.
pub fn total_loss_and_grad_with_trace(
    weights: &RuleSpaceWeights,
    trace: &ForwardTrace,
    batch: &[Example],
    layout: &VariableLayout,
    labels: Vec<u8>,
    lw: &LossWeights,
) -> Result<(LossBreakdown, WeightGrad)> {
    let n = weights.subrules();
    let m = weights.atoms();
    if layout.atoms() != m {
        return Err(Error::ShapeMismatch {
            context: "total_loss layout atoms",
            expected: m,
            got: layout.atoms(),
        });
    }
    debug_assert_eq!(batch.len(), trace.batch_len());
    let probs = trace.probabilities();

    let bce_value = bce(trace.predictions(), &labels)?;
    let upstream = bce_grad(trace.predictions(), &labels);
    let mut dp = backward_to_probs(trace, &upstream)?;

    let entropy_value = entropy_loss(probs, lw.epsilon);
    if lw.lambda_e != 0.0 {
        for (d, g) in dp.iter_mut().zip(entropy_grad(probs, lw.epsilon)) {
            *d += lw.lambda_e * g;
        }
    }

    let usage = variable_usage(probs, n, m, layout)?;
    let range_value = range_loss(&usage, layout.head_vars(), lw.eta);
    let connected_value = connected_loss(&usage, layout.aux_vars(), lw.c1, lw.c2);
    let digitization_value = digitization_loss(&usage);

    let kc = layout.var_count();
    if kc > 0 {
        let cells = n * kc;
        let mut dm = vec![0.0; n * kc];
        for i in 0..n {
            for &k in layout.head_vars() {
                dm[i * kc + k] += lw.lambda_r * range_loss_grad_m(usage.get(i, k), lw.eta);
            }
            for &k in layout.aux_vars() {
                dm[i * kc + k] +=
                    lw.lambda_c * connected_loss_grad_m(usage.get(i, k), lw.c1, lw.c2);
            }
            if lw.lambda_d != 0.0 {
                for k in 0..kc {
                    dm[i * kc + k] += lw.lambda_d * digitization_grad_m(usage.get(i, k), cells);
                }
            }
        }
        // dM/dp3_ij = -V[j][k]
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..kc {
                    if layout.contains(j, k) {
                        acc += dm[i * kc + k];
                    }
                }
                dp[(i * m + j) * 3 + 2] -= acc;
            }
        }
    }

    let mut grad = WeightGrad::zeros(n, m);
    for slot in 0..n * m {
        let p = [probs[slot * 3], probs[slot * 3 + 1], probs[slot * 3 + 2]];
        let up = [dp[slot * 3], dp[slot * 3 + 1], dp[slot * 3 + 2]];
        let g = softmax3_vjp(p, up);
        grad.as_mut_slice()[slot * 3..slot * 3 + 3].copy_from_slice(&g);
    }

    let similarity_value = similarity_loss(weights);
    if lw.lambda_s != 0.0 {
        grad.add_scaled(&similarity_grad(weights), lw.lambda_s);
    }

    let breakdown = LossBreakdown {
        bce: bce_value,
        entropy: entropy_value,
        similarity: similarity_value,
        range: range_value,
        connected: connected_value,
        digitization: digitization_value,
        total: bce_value
            + lw.lambda_e * entropy_value
            + lw.lambda_s * similarity_value
            + lw.lambda_r * range_value
            + lw.lambda_c * connected_value
            + lw.lambda_d * digitization_value,
    };
    Ok((breakdown, grad))
}
