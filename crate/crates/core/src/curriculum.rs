//! Linear easy-to-hard curriculum.
//!
//! At step `t` a query is drawn from the easy pool with probability
//! `α_t = max(0, 1 - η·t/T)` and from the hard pool otherwise.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurriculumError {
    #[error("{0} pool is empty")]
    EmptyPool(Source),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSchedule {
    /// Transition speed; α reaches 0 at `t = T/η`.
    pub eta: f64,
    pub total_steps: u64,
}

impl CurriculumSchedule {
    pub fn new(eta: f64, total_steps: u64) -> Result<Self, CurriculumError> {
        let s = Self { eta, total_steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CurriculumError::InvalidSchedule(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.total_steps == 0 {
            return Err(CurriculumError::InvalidSchedule("total_steps must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            eta: 1.0,
            total_steps: 350,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Easy,
    Hard,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Easy => "easy",
            Source::Hard => "hard",
        })
    }
}

/// `α_t = max(0, 1 - η·t/T)`, a pure function of the step.
pub fn mixing_ratio(t: u64, schedule: &CurriculumSchedule) -> f64 {
    let progress = schedule.eta * t as f64 / schedule.total_steps as f64;
    (1.0 - progress).clamp(0.0, 1.0)
}

/// Bernoulli draw: easy with probability `α_t`.
pub fn sample_source<R: Rng + ?Sized>(t: u64, schedule: &CurriculumSchedule, rng: &mut R) -> Source {
    let alpha = mixing_ratio(t, schedule);
    if rng.random::<f64>() < alpha {
        Source::Easy
    } else {
        Source::Hard
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPool<T> {
    pub easy: Vec<T>,
    pub hard: Vec<T>,
}

impl<T> DatasetPool<T> {
    pub fn new(easy: Vec<T>, hard: Vec<T>) -> Result<Self, CurriculumError> {
        let pool = Self { easy, hard };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.easy.is_empty() {
            return Err(CurriculumError::EmptyPool(Source::Easy));
        }
        if self.hard.is_empty() {
            return Err(CurriculumError::EmptyPool(Source::Hard));
        }
        Ok(())
    }

    pub fn get(&self, source: Source) -> &[T] {
        match source {
            Source::Easy => &self.easy,
            Source::Hard => &self.hard,
        }
    }
}

/// `n` draws, each an independent source draw followed by a uniform pick
/// (with replacement) inside the chosen pool.
pub fn sample_batch<'a, T, R: Rng + ?Sized>(
    pool: &'a DatasetPool<T>,
    t: u64,
    n: usize,
    schedule: &CurriculumSchedule,
    rng: &mut R,
) -> Result<Vec<(Source, &'a T)>, CurriculumError> {
    pool.validate()?;
    Ok((0..n)
        .map(|_| {
            let source = sample_source(t, schedule, rng);
            let items = pool.get(source);
            (source, &items[rng.random_range(0..items.len())])
        })
        .collect())
}
