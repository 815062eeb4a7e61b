//! List value calculus and training losses.
//!
//! Expected counts come from the identity `E[Y] = sum_i P(Y >= i)`, so the
//! value a position adds is the difference of expected counts at consecutive
//! prefix lengths. GMV has no head of its own: it is the price-weighted
//! (non-negative) pay increment at every position.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::{Item, ObjectiveWeights};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{Objective, SurvivalMatrix};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Per-position binary click and pay indicators of one exposed list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    clicks: Vec<bool>,
    pays: Vec<bool>,
}

impl LabelVector {
    pub fn new(clicks: Vec<bool>, pays: Vec<bool>) -> Result<Self> {
        if clicks.len() != pays.len() {
            return Err(Error::shape("click and pay labels differ in length"));
        }
        Ok(Self { clicks, pays })
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn clicks(&self) -> &[bool] {
        &self.clicks
    }

    pub fn pays(&self) -> &[bool] {
        &self.pays
    }

    pub fn indicators(&self, objective: Objective) -> &[bool] {
        match objective {
            Objective::Click => &self.clicks,
            Objective::Pay => &self.pays,
        }
    }

    /// `y_j`: number of actions among the first `j` positions, for `j = 1..=len`.
    pub fn cumulative(&self, objective: Objective) -> Vec<usize> {
        self.indicators(objective)
            .iter()
            .scan(0, |acc, &a| {
                *acc += a as usize;
                Some(*acc)
            })
            .collect()
    }
}

/// Weighted multi-objective value of one list.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ListValue {
    pub v_click: f64,
    pub v_pay: f64,
    /// Currency units.
    pub v_gmv: f64,
    pub combined: f64,
}

impl ListValue {
    pub fn new(v_click: f64, v_pay: f64, v_gmv: f64, w: &ObjectiveWeights) -> Self {
        let combined = w.alpha * v_click + w.beta * v_pay + w.gamma * v_gmv;
        Self { v_click, v_pay, v_gmv, combined }
    }
}

fn check_position(s: &SurvivalMatrix, j: usize) -> Result<()> {
    if j == 0 || j > s.len() {
        return Err(Error::OutOfRange { index: j, len: s.len() });
    }
    Ok(())
}

/// Expected action count in the length-`j` prefix (`j` is 1-based).
///
/// The threshold probabilities are first made non-increasing in `i` by a
/// running minimum, which is a no-op for monotone heads.
pub fn expected_count(s: &SurvivalMatrix, j: usize) -> Result<f64> {
    check_position(s, j)?;
    Ok(expected_count_unchecked(s, j))
}

fn expected_count_unchecked(s: &SurvivalMatrix, j: usize) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let mut floor = f64::INFINITY;
    let mut sum = 0.0;
    for &p in s.position(j) {
        floor = floor.min(p);
        sum += floor;
    }
    sum
}

/// Value added by position `t`: `E[count at t] - E[count at t - 1]`.
/// May be negative for a model that is not prefix-monotone.
pub fn incremental_value(s: &SurvivalMatrix, t: usize) -> Result<f64> {
    check_position(s, t)?;
    Ok(expected_count_unchecked(s, t) - expected_count_unchecked(s, t - 1))
}

/// [`incremental_value`] clamped at zero.
pub fn clamped_increment(s: &SurvivalMatrix, t: usize) -> Result<f64> {
    incremental_value(s, t).map(|v| v.max(0.0))
}

/// Probability of exactly `i` actions in the length-`j` prefix,
/// `p[i, j] - p[i + 1, j]` (with `p[max_count + 1, j] = 0`).
pub fn exact_count_probability(s: &SurvivalMatrix, i: usize, j: usize) -> Result<f64> {
    check_position(s, j)?;
    if i == 0 || i > s.max_count() {
        return Err(Error::OutOfRange { index: i, len: s.max_count() });
    }
    let next = if i < s.max_count() { s.get(i + 1, j) } else { 0.0 };
    Ok(s.get(i, j) - next)
}

/// Weighted value of `items` under the given survival matrices.
pub fn list_value(
    click: &SurvivalMatrix,
    pay: &SurvivalMatrix,
    items: &[&Item],
    weights: &ObjectiveWeights,
) -> Result<ListValue> {
    let l = items.len();
    if click.len() < l || pay.len() < l {
        return Err(Error::shape(format!(
            "survival matrices cover {} / {} positions, list has {l}",
            click.len(),
            pay.len()
        )));
    }
    if l == 0 {
        return Ok(ListValue::new(0.0, 0.0, 0.0, weights));
    }
    let v_click = expected_count_unchecked(click, l);
    let v_pay = expected_count_unchecked(pay, l);
    let mut v_gmv = 0.0;
    for (t, item) in items.iter().enumerate() {
        let inc = expected_count_unchecked(pay, t + 1) - expected_count_unchecked(pay, t);
        v_gmv += item.price * inc.max(0.0);
    }
    Ok(ListValue::new(v_click, v_pay, v_gmv, weights))
}

/// Clamped binary cross-entropy and its derivative with respect to the logit
/// that produced `p` (zero inside the clamp region).
fn bce(p: f64, label: bool) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0,1]")));
    }
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let y = if label { 1.0 } else { 0.0 };
    let loss = if label { -math::ln(pc) } else { -math::ln(1.0 - pc) };
    let grad = if pc == p { p - y } else { 0.0 };
    Ok((loss, grad))
}

/// Ordered-regression loss of one objective and `dL/dlogit` laid out like
/// the survival matrix. Only thresholds `i <= j` contribute.
pub fn ordered_regression_terms(s: &SurvivalMatrix, cumulative: &[usize]) -> Result<(f64, Vec<f64>)> {
    let l = cumulative.len();
    if s.len() < l {
        return Err(Error::shape(format!("labels cover {l} positions, survival matrix {}", s.len())));
    }
    let m = s.max_count();
    let mut loss = 0.0;
    let mut grad = vec![0.0; s.len() * m];
    for j in 1..=l {
        for i in 1..=j.min(m) {
            let (li, gi) = bce(s.get(i, j), cumulative[j - 1] >= i)?;
            loss += li;
            grad[(j - 1) * m + i - 1] = gi;
        }
    }
    Ok((loss, grad))
}

/// Sum over both objectives, positions and effective thresholds of the
/// threshold cross-entropies for one sample.
pub fn ordered_regression_loss(click: &SurvivalMatrix, pay: &SurvivalMatrix, labels: &LabelVector) -> Result<f64> {
    let (lc, _) = ordered_regression_terms(click, &labels.cumulative(Objective::Click))?;
    let (lp, _) = ordered_regression_terms(pay, &labels.cumulative(Objective::Pay))?;
    Ok(lc + lp)
}

/// Mean per-position cross-entropy of one objective against the marginal
/// action indicators, with the gradient for each logit. `denom` is the number
/// of terms the mean runs over.
pub fn pointwise_terms(logits: &[f64], indicators: &[bool], denom: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() != indicators.len() {
        return Err(Error::shape(format!(
            "{} logits for {} labels",
            logits.len(),
            indicators.len()
        )));
    }
    let scale = 1.0 / denom as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(indicators) {
        let (l, g) = bce(math::sigmoid(z), y)?;
        loss += l * scale;
        grad.push(g * scale);
    }
    Ok((loss, grad))
}

/// Mean binary cross-entropy over positions and both objectives.
pub fn pointwise_loss(click_logits: &[f64], pay_logits: &[f64], labels: &LabelVector) -> Result<f64> {
    let denom = 2 * labels.len();
    let (lc, _) = pointwise_terms(click_logits, labels.clicks(), denom)?;
    let (lp, _) = pointwise_terms(pay_logits, labels.pays(), denom)?;
    Ok(lc + lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> SurvivalMatrix {
        // One position long enough to hold every threshold: place the column at j = len.
        let m = values.len();
        SurvivalMatrix::from_fn(Objective::Click, m, m, |i, j| if j == m { values[i - 1] } else { 0.0 }).unwrap()
    }

    fn counts(e: &[f64]) -> SurvivalMatrix {
        // Single-threshold matrix whose expected count at j is e[j-1] (all e <= 1).
        SurvivalMatrix::from_fn(Objective::Pay, e.len(), 1, |_, j| e[j - 1]).unwrap()
    }

    fn item(id: u64, price: f64) -> Item {
        Item { id, embedding: vec![1.0], price, prior_ctr: 0.1, prior_cvr: 0.1, category: 0 }
    }

    #[test]
    fn expected_count_examples() {
        assert!((expected_count(&column(&[0.9, 0.4, 0.1]), 3).unwrap() - 1.4).abs() < 1e-12);
        assert_eq!(expected_count(&column(&[0.0, 0.0, 0.0]), 3).unwrap(), 0.0);
        assert_eq!(expected_count(&column(&[1.0, 1.0, 0.0]), 3).unwrap(), 2.0);
        assert!(expected_count(&column(&[0.5]), 2).is_err());
        assert!(expected_count(&column(&[0.5]), 0).is_err());
    }

    #[test]
    fn literal_columns_are_clamped_non_increasing() {
        assert!((expected_count(&column(&[0.3, 0.6, 0.1]), 3).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn increments_difference_expected_counts() {
        let s = counts(&[0.5, 0.9, 1.0]);
        let inc: Vec<f64> = (1..=3).map(|t| incremental_value(&s, t).unwrap()).collect();
        for (a, b) in inc.iter().zip([0.5, 0.4, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        let flat = counts(&[0.7, 0.7, 0.7]);
        assert_eq!(incremental_value(&flat, 2).unwrap(), 0.0);
        assert_eq!(incremental_value(&flat, 3).unwrap(), 0.0);
        assert!(incremental_value(&flat, 4).is_err());
    }

    #[test]
    fn increments_telescope_on_multi_threshold_matrix() {
        // expected counts by length 0.5, 0.9, 1.1
        let s = SurvivalMatrix::from_fn(Objective::Click, 3, 2, |i, j| match (i, j) {
            (1, 1) => 0.5,
            (1, 2) => 0.7,
            (2, 2) => 0.2,
            (1, 3) => 0.8,
            (2, 3) => 0.3,
            _ => 0.0,
        })
        .unwrap();
        let inc: Vec<f64> = (1..=3).map(|t| incremental_value(&s, t).unwrap()).collect();
        for (a, b) in inc.iter().zip([0.5, 0.4, 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((inc.iter().sum::<f64>() - expected_count(&s, 3).unwrap()).abs() < 1e-12);
        assert!((exact_count_probability(&s, 1, 3).unwrap() - 0.5).abs() < 1e-12);
        assert!((exact_count_probability(&s, 2, 3).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn weighted_value_arithmetic() {
        let w = ObjectiveWeights::new(5.0, 1.0, 1.0);
        let v = ListValue::new(1.4, 0.2, 10.0, &w);
        assert!((v.combined - 17.2).abs() < 1e-12);
    }

    #[test]
    fn list_value_from_matrices() {
        let a = item(1, 10.0);
        let b = item(2, 20.0);
        let click = counts(&[0.5, 0.8]);
        let pay = counts(&[0.1, 0.3]);
        let w = ObjectiveWeights::new(5.0, 1.0, 1.0);
        let v = list_value(&click, &pay, &[&a, &b], &w).unwrap();
        assert!((v.v_click - 0.8).abs() < 1e-12);
        assert!((v.v_pay - 0.3).abs() < 1e-12);
        assert!((v.v_gmv - (10.0 * 0.1 + 20.0 * 0.2)).abs() < 1e-12);
        assert!((v.combined - (4.0 + 0.3 + 5.0)).abs() < 1e-12);
        assert!(list_value(&click, &pay, &[&a, &b, &a], &w).is_err());

        let zero = counts(&[0.0, 0.0]);
        assert_eq!(list_value(&zero, &zero, &[&a, &b], &w).unwrap().combined, 0.0);
    }

    #[test]
    fn gmv_weight_zero_ignores_prices() {
        let w = ObjectiveWeights::new(1.0, 2.0, 0.0);
        let click = counts(&[0.5, 0.8]);
        let pay = counts(&[0.1, 0.3]);
        let v1 = list_value(&click, &pay, &[&item(1, 10.0), &item(2, 20.0)], &w).unwrap();
        let v2 = list_value(&click, &pay, &[&item(1, 99.0), &item(2, 0.5)], &w).unwrap();
        assert_eq!(v1.combined, v2.combined);
    }

    #[test]
    fn ordered_regression_hand_example() {
        // l = 2, one click at position 1: y = [1, 1]; all p = 0.5.
        let s = SurvivalMatrix::from_fn(Objective::Click, 2, 2, |_, _| 0.5).unwrap();
        let (loss, grad) = ordered_regression_terms(&s, &[1, 1]).unwrap();
        assert!((loss - 3.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss - 2.0794).abs() < 1e-4);
        // p[1,1]: y>=1 -> -0.5; p[2,1] masked; p[1,2]: -0.5; p[2,2]: y<2 -> +0.5
        assert_eq!(grad, vec![-0.5, 0.0, -0.5, 0.5]);
    }

    #[test]
    fn ordered_regression_perfect_and_silent() {
        let labels = LabelVector::new(vec![true, false, true], vec![false, false, false]).unwrap();
        let yc = labels.cumulative(Objective::Click);
        assert_eq!(yc, vec![1, 1, 2]);
        let click = SurvivalMatrix::from_fn(Objective::Click, 3, 3, |i, j| if yc[j - 1] >= i { 1.0 } else { 0.0 }).unwrap();
        let pay = SurvivalMatrix::from_fn(Objective::Pay, 3, 3, |_, _| 0.0).unwrap();
        let loss = ordered_regression_loss(&click, &pay, &labels).unwrap();
        assert!(loss < 1e-5, "{loss}");
    }

    #[test]
    fn pointwise_examples() {
        let labels = LabelVector::new(vec![true, false], vec![false, true]).unwrap();
        let l = pointwise_loss(&[0.0, 0.0], &[0.0, 0.0], &labels).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        let good = pointwise_loss(&[40.0, -40.0], &[-40.0, 40.0], &labels).unwrap();
        assert!(good < 1e-6);
        let none = LabelVector::new(vec![false; 3], vec![false; 3]).unwrap();
        let z = math::ln(0.25 / 0.75);
        let l = pointwise_loss(&[z; 3], &[z; 3], &none).unwrap();
        assert!((l - 0.2877).abs() < 1e-4);
        assert!(pointwise_loss(&[0.0], &[0.0, 0.0], &labels).is_err());
    }
}
