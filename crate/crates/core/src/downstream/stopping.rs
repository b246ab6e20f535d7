/// What the caller should do after reporting an epoch's validation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// New best; the state passed in was kept.
    Improved,
    NoImprovement,
    /// Patience exhausted; training ends at this epoch.
    Stop,
}

/// Patience-based early stopping that keeps the state of the best epoch.
///
/// Epochs are 1-based. A score improves only when strictly greater than the
/// best so far, so the earliest epoch wins ties. Training stops at the first
/// epoch `e` with `e − best_epoch ≥ patience`.
#[derive(Debug, Clone)]
pub struct EarlyStopper<T> {
    patience: usize,
    best: Option<(usize, f64, T)>,
    last_epoch: usize,
}

impl<T> EarlyStopper<T> {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1, "patience must be positive");
        EarlyStopper {
            patience,
            best: None,
            last_epoch: 0,
        }
    }

    pub fn patience(&self) -> usize {
        self.patience
    }

    /// Reports `score` for the next epoch. `snapshot` is called only on improvement.
    pub fn observe(&mut self, score: f64, snapshot: impl FnOnce() -> T) -> Observation {
        self.last_epoch += 1;
        let e = self.last_epoch;
        let improved = match &self.best {
            None => !score.is_nan(),
            Some((_, b, _)) => score > *b,
        };
        if improved {
            self.best = Some((e, score, snapshot()));
            return Observation::Improved;
        }
        let since = e - self.best.as_ref().map_or(0, |b| b.0);
        if since >= self.patience {
            Observation::Stop
        } else {
            Observation::NoImprovement
        }
    }

    pub fn epochs_seen(&self) -> usize {
        self.last_epoch
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn best_score(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.1)
    }

    pub fn into_best(self) -> Option<(usize, f64, T)> {
        self.best
    }
}
