use serde::{Deserialize, Serialize};

/// What one charged call was.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CostKind {
    /// Forward (state) solve.
    State,
    /// Adjoint solve completing a gradient.
    Gradient,
    /// One `B dtheta` product.
    B,
    /// One Hessian-vector product.
    H,
}

/// Linear-solve units charged per call of each kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub state: u64,
    pub gradient: u64,
    pub b: u64,
    pub h: u64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            state: 1,
            gradient: 1,
            b: 2,
            h: 2,
        }
    }
}

impl CostWeights {
    pub fn weight(&self, kind: CostKind) -> u64 {
        match kind {
            CostKind::State => self.state,
            CostKind::Gradient => self.gradient,
            CostKind::B => self.b,
            CostKind::H => self.h,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub weights: CostWeights,
    pub state_solves: u64,
    pub gradient_evals: u64,
    pub b_applies: u64,
    pub h_applies: u64,
    total: u64,
}

impl CostLedger {
    pub fn new(weights: CostWeights) -> Self {
        Self {
            weights,
            ..Self::default()
        }
    }

    pub fn charge(&mut self, kind: CostKind, count: u64) {
        match kind {
            CostKind::State => self.state_solves += count,
            CostKind::Gradient => self.gradient_evals += count,
            CostKind::B => self.b_applies += count,
            CostKind::H => self.h_applies += count,
        }
        self.total += count * self.weights.weight(kind);
    }

    /// Running total in linear-solve units.
    pub fn total_linear_solves(&self) -> u64 {
        self.total
    }

    /// Total recomputed from the counters.
    pub fn recomputed_total(&self) -> u64 {
        let w = &self.weights;
        self.state_solves * w.state + self.gradient_evals * w.gradient + self.b_applies * w.b + self.h_applies * w.h
    }

    /// Incremental (linearized) PDE solves: one per gradient, two per `B` or `H` product.
    pub fn linearized_solves(&self) -> u64 {
        self.gradient_evals + 2 * (self.b_applies + self.h_applies)
    }

    pub fn replay(weights: CostWeights, events: &[(CostKind, u64)]) -> Self {
        let mut out = Self::new(weights);
        for &(kind, count) in events {
            out.charge(kind, count);
        }
        out
    }
}

/// A ledger that also keeps every charge in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingLedger {
    pub ledger: CostLedger,
    pub events: Vec<(CostKind, u64)>,
}

impl RecordingLedger {
    pub fn new(weights: CostWeights) -> Self {
        Self {
            ledger: CostLedger::new(weights),
            events: Vec::new(),
        }
    }

    pub fn charge(&mut self, kind: CostKind, count: u64) {
        if count == 0 {
            return;
        }
        self.ledger.charge(kind, count);
        match self.events.last_mut() {
            Some((k, c)) if *k == kind => *c += count,
            _ => self.events.push((kind, count)),
        }
    }
}
