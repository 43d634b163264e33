//! Central finite differences as an independent check on [`grpo_gradient`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    clip_active, grpo_gradient, grpo_objective, group_advantages, GrpoConfig, GrpoError,
    RolloutGroup, ToyPolicy,
};

/// Denominator floor for relative errors so that two vanishing entries
/// compare by absolute difference.
const RELATIVE_FLOOR: f64 = 1e-8;
/// Ratios this close to `1 ± ε` are treated as sitting on the kink.
const BOUNDARY_MARGIN: f64 = 1e-6;

/// `(f(θ + h·e_k) - f(θ - h·e_k)) / 2h` for every coordinate `k`.
pub fn central_difference<F>(params: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|k| {
            probe[k] = params[k] + h;
            let up = f(&probe);
            probe[k] = params[k] - h;
            let down = f(&probe);
            probe[k] = params[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn objective_at(
    policy: &ToyPolicy,
    logits: &[f64],
    group: &RolloutGroup,
    config: &GrpoConfig,
) -> Result<f64, GrpoError> {
    let probe = ToyPolicy::from_logits(policy.horizon(), policy.vocab(), logits.to_vec());
    let mut g = group.clone();
    g.refresh_new(&probe);
    grpo_objective(&g, config)
}

/// Finite-difference gradient of the objective with respect to the logits.
/// Only `logp_new` is recomputed at each probe; snapshot columns stay frozen.
pub fn finite_diff_gradient(
    policy: &ToyPolicy,
    group: &RolloutGroup,
    config: &GrpoConfig,
    h: f64,
) -> Result<Vec<f64>, GrpoError> {
    group.validate()?;
    let mut failure = None;
    let grad = central_difference(policy.logits(), h, |logits| {
        objective_at(policy, logits, group, config).unwrap_or_else(|e| {
            failure = Some(e);
            f64::NAN
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(grad),
    }
}

/// Max over unmasked entries of `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn max_relative_error(a: &[f64], b: &[f64], skip: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(skip.iter().chain(std::iter::repeat(&false)))
        .filter(|(_, &s)| !s)
        .map(|((x, y), _)| (x - y).abs() / x.abs().max(y.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

/// Which tokens sit on the clipped branch, or within the boundary margin.
fn branch_pattern(
    policy: &ToyPolicy,
    group: &RolloutGroup,
    adv: &[f64],
    eps: f64,
) -> Vec<(bool, bool)> {
    let mut out = Vec::new();
    for (i, output) in group.outputs.iter().enumerate() {
        let lp = policy.sequence_log_probs(output);
        for (t, &l) in lp.iter().enumerate() {
            let w = (l - group.logp_old[i][t]).exp();
            let near = (w - (1.0 - eps)).abs() <= BOUNDARY_MARGIN
                || (w - (1.0 + eps)).abs() <= BOUNDARY_MARGIN;
            out.push((clip_active(w, adv[i], eps), near));
        }
    }
    out
}

/// Parameters whose finite-difference probes straddle a clip kink.
fn kink_mask(
    policy: &ToyPolicy,
    group: &RolloutGroup,
    config: &GrpoConfig,
    h: f64,
) -> Result<Vec<bool>, GrpoError> {
    let adv = group_advantages(&group.rewards, config)?;
    let eps = config.clip_epsilon;
    let base = branch_pattern(policy, group, &adv.0, eps);
    let mut probe = policy.clone();
    let mut mask = vec![false; policy.param_count()];
    for (k, m) in mask.iter_mut().enumerate() {
        let original = policy.logits()[k];
        let mut flipped = base.iter().any(|&(_, near)| near);
        for delta in [h, -h] {
            probe.logits_mut()[k] = original + delta;
            let pattern = branch_pattern(&probe, group, &adv.0, eps);
            flipped |= pattern.iter().zip(&base).any(|(p, b)| p.0 != b.0 || p.1);
        }
        probe.logits_mut()[k] = original;
        *m = flipped;
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub compared: usize,
    pub excluded: usize,
    pub max_relative_error: f64,
    /// Largest analytic gradient entry seen, for context.
    pub max_abs_gradient: f64,
}

/// Builds a seeded trial: a random current policy, snapshot and reference
/// perturbed from it, outputs sampled from the snapshot, random rewards.
pub fn seeded_group(
    rng: &mut ChaCha8Rng,
    horizon: usize,
    vocab: usize,
    group_size: usize,
) -> (ToyPolicy, RolloutGroup) {
    let policy = ToyPolicy::random(horizon, vocab, 1.0, rng);
    let jitter = |p: &ToyPolicy, rng: &mut ChaCha8Rng| {
        let logits = p
            .logits()
            .iter()
            .map(|l| l + rng.random_range(-0.4..=0.4))
            .collect();
        ToyPolicy::from_logits(p.horizon(), p.vocab(), logits)
    };
    let old = jitter(&policy, rng);
    let reference = jitter(&policy, rng);
    let outputs: Vec<Vec<usize>> = (0..group_size).map(|_| old.sample(rng)).collect();
    let column = |p: &ToyPolicy| outputs.iter().map(|o| p.sequence_log_probs(o)).collect();
    let group = RolloutGroup {
        query_id: "gradcheck".into(),
        logp_new: column(&policy),
        logp_old: column(&old),
        logp_ref: column(&reference),
        rewards: (0..group_size).map(|_| rng.random::<f64>()).collect(),
        outputs,
    };
    (policy, group)
}

/// Compares `analytic` against central differences over `trials` seeded
/// groups. Pass [`grpo_gradient`] for the real check.
pub fn gradient_check<F>(
    seed: u64,
    horizon: usize,
    vocab: usize,
    trials: usize,
    config: &GrpoConfig,
    h: f64,
    analytic: F,
) -> Result<GradCheckReport, GrpoError>
where
    F: Fn(&ToyPolicy, &RolloutGroup, &GrpoConfig) -> Result<Vec<f64>, GrpoError>,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        trials,
        compared: 0,
        excluded: 0,
        max_relative_error: 0.0,
        max_abs_gradient: 0.0,
    };
    for _ in 0..trials {
        let (policy, group) = seeded_group(&mut rng, horizon, vocab, config.group_size);
        let exact = analytic(&policy, &group, config)?;
        let numeric = finite_diff_gradient(&policy, &group, config, h)?;
        let mask = kink_mask(&policy, &group, config, h)?;
        let excluded = mask.iter().filter(|&&m| m).count();
        report.excluded += excluded;
        report.compared += mask.len() - excluded;
        report.max_relative_error = report
            .max_relative_error
            .max(max_relative_error(&exact, &numeric, &mask));
        report.max_abs_gradient = exact.iter().map(|g| g.abs()).fold(report.max_abs_gradient, f64::max);
    }
    Ok(report)
}

/// [`gradient_check`] with the real analytic gradient.
pub fn check_grpo_gradient(
    seed: u64,
    horizon: usize,
    vocab: usize,
    trials: usize,
    config: &GrpoConfig,
    h: f64,
) -> Result<GradCheckReport, GrpoError> {
    gradient_check(seed, horizon, vocab, trials, config, h, grpo_gradient)
}
