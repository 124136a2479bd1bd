use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::session::Session;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions must be in [0, 1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// Sessions of the training split. Vocabulary and co-occurrence builders
/// accept only this type.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainSplit(Vec<Session>);

impl TrainSplit {
    pub fn new(sessions: Vec<Session>) -> Self {
        TrainSplit(sessions)
    }

    pub fn sessions(&self) -> &[Session] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: TrainSplit,
    pub dev: Vec<Session>,
    pub test: Vec<Session>,
}

/// Seeded shuffle of whole sessions followed by contiguous slicing.
pub fn split_sessions(mut sessions: Vec<Session>, spec: SplitSpec) -> Result<Splits> {
    spec.validate()?;
    if sessions.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 sessions to split, got {}",
            sessions.len()
        )));
    }
    let n = sessions.len();
    sessions.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((n as f64 * spec.train) + 1e-9).floor() as usize;
    let n_dev = (((n as f64 * spec.dev) + 1e-9).floor() as usize).min(n - n_train);
    let test = sessions.split_off(n_train + n_dev);
    let dev = sessions.split_off(n_train);
    Ok(Splits {
        train: TrainSplit(sessions),
        dev,
        test,
    })
}
