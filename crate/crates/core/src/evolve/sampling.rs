//! Mixed uniform/softmax parent selection.

use rand::Rng;

use super::EvolveError;

/// `P(i) = λ/t + (1-λ)·exp(α·s_i) / Σ_j exp(α·s_j)`, evaluated with the
/// maximum score subtracted inside the exponentials.
pub fn p_mixed(scores: &[f64], lambda: f64, alpha: f64) -> Result<Vec<f64>, EvolveError> {
    if scores.is_empty() {
        return Err(EvolveError::EmptyHistory);
    }
    let t = scores.len() as f64;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (alpha * (s - max)).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| lambda / t + (1.0 - lambda) * e / z).collect())
}

/// Draws an index from a probability vector by inverse CDF.
pub fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn sample_parent<R: Rng + ?Sized>(scores: &[f64], lambda: f64, alpha: f64, rng: &mut R) -> Result<usize, EvolveError> {
    Ok(draw(&p_mixed(scores, lambda, alpha)?, rng))
}

/// Parents for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentSelection {
    /// Only one entry exists, so binary operators cannot run.
    Single(usize),
    Pair(usize, usize),
}

impl ParentSelection {
    pub fn indices(&self) -> Vec<usize> {
        match *self {
            ParentSelection::Single(a) => vec![a],
            ParentSelection::Pair(a, b) => vec![a, b],
        }
    }
}

/// Two distinct indices: the first by [`sample_parent`], the second by
/// resampling until it differs.
pub fn sample_parent_pair<R: Rng + ?Sized>(scores: &[f64], lambda: f64, alpha: f64, rng: &mut R) -> Result<ParentSelection, EvolveError> {
    let probs = p_mixed(scores, lambda, alpha)?;
    let a = draw(&probs, rng);
    if scores.len() < 2 {
        return Ok(ParentSelection::Single(a));
    }
    if probs.iter().enumerate().all(|(i, p)| i == a || *p <= 0.0) {
        // Every other entry has probability zero; take the best of the rest.
        let b = (0..scores.len()).filter(|i| *i != a).max_by(|x, y| scores[*x].total_cmp(&scores[*y]).then(y.cmp(x))).expect("t >= 2");
        return Ok(ParentSelection::Pair(a, b));
    }
    loop {
        let b = draw(&probs, rng);
        if b != a {
            return Ok(ParentSelection::Pair(a, b));
        }
    }
}
