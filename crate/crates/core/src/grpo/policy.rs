use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tabular policy: an independent softmax categorical over `vocab` symbols
/// at each of `horizon` positions. Logits are stored row-major by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    horizon: usize,
    vocab: usize,
    logits: Vec<f64>,
}

impl ToyPolicy {
    /// Uniform policy (all logits zero).
    pub fn uniform(horizon: usize, vocab: usize) -> Self {
        assert!(horizon > 0 && vocab > 0, "policy needs a non-empty table");
        Self {
            horizon,
            vocab,
            logits: vec![0.0; horizon * vocab],
        }
    }

    pub fn from_logits(horizon: usize, vocab: usize, logits: Vec<f64>) -> Self {
        assert!(horizon > 0 && vocab > 0, "policy needs a non-empty table");
        assert_eq!(logits.len(), horizon * vocab, "logit table shape");
        Self {
            horizon,
            vocab,
            logits,
        }
    }

    /// Logits drawn uniformly from `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(horizon: usize, vocab: usize, scale: f64, rng: &mut R) -> Self {
        let logits = (0..horizon * vocab)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self::from_logits(horizon, vocab, logits)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn param_count(&self) -> usize {
        self.logits.len()
    }

    pub fn index(&self, position: usize, symbol: usize) -> usize {
        position * self.vocab + symbol
    }

    fn row(&self, position: usize) -> &[f64] {
        &self.logits[position * self.vocab..(position + 1) * self.vocab]
    }

    /// Log-softmax of one position's logits.
    pub fn log_probs(&self, position: usize) -> Vec<f64> {
        let row = self.row(position);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        row.iter().map(|l| l - log_z).collect()
    }

    pub fn probs(&self, position: usize) -> Vec<f64> {
        self.log_probs(position).into_iter().map(f64::exp).collect()
    }

    /// Per-token log-probabilities of `tokens`, where token `t` is drawn at
    /// position `t`.
    pub fn sequence_log_probs(&self, tokens: &[usize]) -> Vec<f64> {
        assert!(tokens.len() <= self.horizon, "sequence longer than horizon");
        tokens
            .iter()
            .enumerate()
            .map(|(t, &s)| self.log_probs(t)[s])
            .collect()
    }

    /// Samples a full-horizon sequence by inverse-CDF at each position.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.horizon)
            .map(|t| {
                let probs = self.probs(t);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (s, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return s;
                    }
                }
                self.vocab - 1
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &ToyPolicy) -> f64 {
        self.logits
            .iter()
            .zip(&other.logits)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rows_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = ToyPolicy::random(4, 6, 5.0, &mut rng);
        for t in 0..4 {
            let total: f64 = policy.probs(t).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let extreme = ToyPolicy::from_logits(1, 3, vec![800.0, -800.0, 0.0]);
        assert!((extreme.probs(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sequence_log_probs_pick_tokens() {
        let policy = ToyPolicy::from_logits(2, 2, vec![0.0, 0.0, 0.0, 2.0_f64.ln()]);
        let lp = policy.sequence_log_probs(&[1, 1]);
        assert!((lp[0] - 0.5f64.ln()).abs() < 1e-12);
        assert!((lp[1] - (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    /// Empirical frequencies over 10k draws sit inside 3 binomial sigmas of
    /// the softmax probabilities.
    #[test]
    fn sampling_matches_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = ToyPolicy::random(3, 4, 1.5, &mut rng);
        let n = 10_000;
        let mut counts = [0usize; 3 * 4];
        for _ in 0..n {
            for (t, s) in policy.sample(&mut rng).into_iter().enumerate() {
                counts[t * 4 + s] += 1;
            }
        }
        for t in 0..3 {
            for (s, p) in policy.probs(t).into_iter().enumerate() {
                let freq = counts[t * 4 + s] as f64 / n as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * sigma, "pos {t} sym {s}: {freq} vs {p}");
            }
        }
    }
}
