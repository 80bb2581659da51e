use rayon::prelude::*;

use super::EngineError;
use crate::matrix::Criterion;
use crate::query::EquilibriumKind;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    /// Stop once consecutive sweeps differ by at most this much.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub kind: EquilibriumKind,
    pub criterion: Criterion,
    /// Worker threads for per-state backups; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            epsilon: 1e-6,
            max_iterations: 1_000_000,
            kind: EquilibriumKind::Nash,
            criterion: Criterion::SocialWelfare,
            threads: None,
        }
    }
}

impl EngineSettings {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(EngineError::InvalidSettings(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(EngineError::InvalidSettings("max-iterations must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(EngineError::InvalidSettings("thread count must be at least 1".into()));
        }
        Ok(())
    }

    /// Runs `f` inside a pool of the configured size.
    pub(crate) fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R, EngineError> {
        self.validate()?;
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| EngineError::InvalidSettings(e.to_string()))?;
                Ok(pool.install(f))
            }
        }
    }
}

/// Evaluates `f` for every state. Each call depends only on its index, so
/// the result is the same for any number of threads.
pub(crate) fn per_state<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().with_min_len(8).map(f).collect()
}

/// Largest absolute componentwise difference.
pub(crate) fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| if x == y { m } else { m.max((x - y).abs()) })
}
