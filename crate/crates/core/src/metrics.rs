//! Concordance correlation coefficient, mean squared error and the
//! `1 − CCC` training objective.
//!
//! All moments are population moments (divide by `N`).

use crate::autodiff::{Scalar, Tape, Var};
use crate::error::{Error, Result};

/// Population moments of a prediction/truth pair.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MomentSet {
    pub mean_pred: f64,
    pub mean_truth: f64,
    pub var_pred: f64,
    pub var_truth: f64,
    pub cov: f64,
}

impl MomentSet {
    /// Two-pass evaluation over whole slices.
    pub fn from_slices(pred: &[f64], truth: &[f64]) -> Result<Self> {
        check_pair(pred, truth, 1)?;
        let n = pred.len() as f64;
        let mean_pred = corrected_mean(pred);
        let mean_truth = corrected_mean(truth);
        let (mut var_pred, mut var_truth, mut cov) = (0.0, 0.0, 0.0);
        for (&x, &y) in pred.iter().zip(truth) {
            let (dx, dy) = (x - mean_pred, y - mean_truth);
            var_pred += dx * dx;
            var_truth += dy * dy;
            cov += dx * dy;
        }
        Ok(Self { mean_pred, mean_truth, var_pred: var_pred / n, var_truth: var_truth / n, cov: cov / n })
    }

    /// `2 s_xy / (s_x² + s_y² + (x̄ − ȳ)²)`, or 0 when the denominator vanishes.
    pub fn ccc(&self) -> f64 {
        let diff = self.mean_pred - self.mean_truth;
        let denom = self.var_pred + self.var_truth + diff * diff;
        if denom == 0.0 {
            0.0
        } else {
            2.0 * self.cov / denom
        }
    }

    pub fn pearson(&self) -> f64 {
        let denom = (self.var_pred * self.var_truth).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            self.cov / denom
        }
    }
}

/// Single-pass (Welford) accumulation of [`MomentSet`], used when metrics
/// are gathered batch by batch over a whole split.
#[derive(Clone, Debug, Default)]
pub struct StreamingMoments {
    count: u64,
    mean_pred: f64,
    mean_truth: f64,
    m2_pred: f64,
    m2_truth: f64,
    co: f64,
    sq_err: f64,
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pred: f64, truth: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = pred - self.mean_pred;
        let dy = truth - self.mean_truth;
        self.mean_pred += dx / n;
        self.mean_truth += dy / n;
        self.m2_pred += dx * (pred - self.mean_pred);
        self.m2_truth += dy * (truth - self.mean_truth);
        self.co += dx * (truth - self.mean_truth);
        self.sq_err += (pred - truth) * (pred - truth);
    }

    pub fn extend(&mut self, pred: &[f64], truth: &[f64]) {
        for (&x, &y) in pred.iter().zip(truth) {
            self.push(x, y);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn moments(&self) -> MomentSet {
        let n = self.count.max(1) as f64;
        MomentSet {
            mean_pred: self.mean_pred,
            mean_truth: self.mean_truth,
            var_pred: self.m2_pred / n,
            var_truth: self.m2_truth / n,
            cov: self.co / n,
        }
    }

    pub fn ccc(&self) -> f64 {
        self.moments().ccc()
    }

    pub fn mse(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sq_err / self.count as f64
        }
    }
}

/// Two-pass mean; the correction term makes the mean of a constant
/// vector exact.
fn corrected_mean(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    m + x.iter().map(|v| v - m).sum::<f64>() / n
}

fn check_pair(pred: &[f64], truth: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!("length mismatch: {} predictions vs {} labels", pred.len(), truth.len())));
    }
    if pred.len() < min_len {
        return Err(Error::Contract(format!("need at least {min_len} samples, got {}", pred.len())));
    }
    Ok(())
}

/// Concordance correlation coefficient of two equal-length vectors (length ≥ 2).
pub fn ccc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    Ok(MomentSet::from_slices(pred, truth)?.ccc())
}

pub fn pearson(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 2)?;
    Ok(MomentSet::from_slices(pred, truth)?.pearson())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, 1)?;
    Ok(pred.iter().zip(truth).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / pred.len() as f64)
}

/// Differentiable CCC of two equal-shape nodes, over all their elements.
pub fn ccc_var<T: Scalar>(tape: &mut Tape<T>, pred: Var, truth: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(truth) {
        return Err(Error::shape("ccc", format!("{:?} vs {:?}", tape.shape(pred), tape.shape(truth))));
    }
    let mx = tape.mean(pred);
    let my = tape.mean(truth);
    let neg_mx = tape.scale(mx, -1.0);
    let neg_my = tape.scale(my, -1.0);
    let dx = tape.add_scalar(pred, neg_mx)?;
    let dy = tape.add_scalar(truth, neg_my)?;
    let pxy = tape.mul(dx, dy)?;
    let sxy = tape.mean(pxy);
    let pxx = tape.mul(dx, dx)?;
    let sxx = tape.mean(pxx);
    let pyy = tape.mul(dy, dy)?;
    let syy = tape.mean(pyy);
    let diff = tape.sub(mx, my)?;
    let diff2 = tape.mul(diff, diff)?;
    let var_sum = tape.add(sxx, syy)?;
    let denom = tape.add(var_sum, diff2)?;
    let num = tape.scale(sxy, 2.0);
    tape.div_or_zero(num, denom)
}

/// `(1 − CCC_valence)/2 + (1 − CCC_arousal)/2` over the flattened `B·L`
/// axis of `B×L×2` predictions and labels.
pub fn ccc_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, truth: Var) -> Result<Var> {
    let shape = tape.shape(pred).to_vec();
    if shape != tape.shape(truth) || shape.last() != Some(&2) {
        return Err(Error::shape(
            "ccc_loss",
            format!("expected matching …×2 shapes, got {:?} and {:?}", shape, tape.shape(truth)),
        ));
    }
    let rows: usize = shape[..shape.len() - 1].iter().product();
    let p = tape.reshape(pred, &[rows, 2])?;
    let t = tape.reshape(truth, &[rows, 2])?;
    let mut halves = Vec::with_capacity(2);
    for dim in 0..2 {
        let pd = tape.slice_last(p, dim, 1)?;
        let td = tape.slice_last(t, dim, 1)?;
        let c = ccc_var(tape, pd, td)?;
        let one_minus = tape.scale(c, -1.0);
        let one_minus = tape.add_const(one_minus, 1.0);
        halves.push(tape.scale(one_minus, 0.5));
    }
    tape.add(halves[0], halves[1])
}
