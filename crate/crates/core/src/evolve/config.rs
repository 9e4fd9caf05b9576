use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::ops::{OperatorWeights, DEFAULT_SITE_BUDGET};

pub const DEFAULT_LAMBDA: f64 = 0.3;
pub const DEFAULT_ALPHA: f64 = 5.0;
pub const DEFAULT_CANDIDATE_POOL: usize = 4;
pub const DEFAULT_MAX_ROUNDS: usize = 20;
pub const DEFAULT_NUM_TRIES: usize = 3;
pub const DEFAULT_CROSSOVER_RATE: f64 = 0.10;

/// Hyperparameters of one evolution run.
///
/// `operator_weights`, when omitted, gives `crossover_rate` to crossover and
/// splits the rest evenly over the other five operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub candidate_pool: usize,
    pub max_rounds: usize,
    pub num_tries: usize,
    pub seed: u64,
    pub crossover_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator_weights: Option<OperatorWeights>,
    /// Sites an operator tries before reporting that nothing applies.
    pub site_budget: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            lambda: DEFAULT_LAMBDA,
            alpha: DEFAULT_ALPHA,
            candidate_pool: DEFAULT_CANDIDATE_POOL,
            max_rounds: DEFAULT_MAX_ROUNDS,
            num_tries: DEFAULT_NUM_TRIES,
            seed: 0,
            crossover_rate: DEFAULT_CROSSOVER_RATE,
            operator_weights: None,
            site_budget: DEFAULT_SITE_BUDGET,
        }
    }
}

impl EvolutionConfig {
    /// Effective per-operator weights.
    pub fn weights(&self) -> OperatorWeights {
        self.operator_weights.unwrap_or_else(|| OperatorWeights::with_crossover_rate(self.crossover_rate))
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: String| Err(EvolveError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return bad(format!("alpha must be a nonnegative number, got {}", self.alpha));
        }
        if self.candidate_pool == 0 {
            return bad("candidate_pool must be at least 1".into());
        }
        if self.num_tries == 0 {
            return bad("num_tries must be at least 1".into());
        }
        if self.site_budget == 0 {
            return bad("site_budget must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!("crossover_rate must lie in [0, 1], got {}", self.crossover_rate));
        }
        let w = self.weights();
        w.validate().map_err(|e| EvolveError::InvalidConfig(e.to_string()))?;
        let total: f64 = w.probabilities().iter().map(|(k, _)| w.get(*k)).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("operator_weights must sum to 1, got {total}"));
        }
        if let Some(explicit) = self.operator_weights {
            if (explicit.crossover - self.crossover_rate).abs() > 1e-9 {
                return bad(format!(
                    "operator_weights.crossover ({}) disagrees with crossover_rate ({})",
                    explicit.crossover, self.crossover_rate
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = EvolutionConfig::default();
        assert_eq!((c.lambda, c.alpha, c.candidate_pool, c.max_rounds, c.num_tries), (0.3, 5.0, 4, 20, 3));
        assert!(c.validate().is_ok());
        assert!((c.weights().crossover - 0.10).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip_and_checks() {
        let c: EvolutionConfig = toml::from_str("lambda = 0.5\nseed = 3\n").unwrap();
        assert_eq!((c.lambda, c.seed, c.max_rounds), (0.5, 3, 20));
        let back: EvolutionConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<EvolutionConfig>("lamda = 0.5").is_err());
        for bad in ["lambda = 1.5", "candidate_pool = 0", "num_tries = 0", "alpha = -1.0", "crossover_rate = 0.2\n[operator_weights]\ncrossover = 0.1\nsubstitution = 0.9"] {
            let c: EvolutionConfig = toml::from_str(bad).unwrap();
            assert!(c.validate().is_err(), "{bad}");
        }
        let unnormalized: EvolutionConfig = toml::from_str("crossover_rate = 0.0\n[operator_weights]\ndeletion = 2.0").unwrap();
        assert!(unnormalized.validate().is_err());
    }
}
