use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Order in which the iterative reduction alternates its two projections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    #[default]
    ReachableFirst,
    ObservableFirst,
}

/// Numerical knobs shared by every module.
#[derive(Clone, Copy, Debug)]
pub struct Config<T: Real> {
    /// Relative tolerance for every rank / PSD decision, scaled by the largest
    /// singular value of the matrix under test.
    pub tol: T,
    /// Seed for the randomized Wedderburn decomposition.
    pub seed: u64,
    pub max_iters: usize,
    /// Horizon of the trajectory checks run after a reduction.
    pub horizon: usize,
    pub order: Order,
}

impl<T: Real> Default for Config<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9),
            seed: 0,
            max_iters: 16,
            horizon: 64,
            order: Order::ReachableFirst,
        }
    }
}

impl<T: Real> Config<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    /// Relative gap separating eigenvalue clusters of a random central or
    /// commutant element.
    pub fn gap_tol(&self) -> T {
        self.tol.sqrt()
    }

    /// Threshold for internal consistency guards (closure, round-trip and
    /// invariance residuals).
    pub fn guard_tol(&self) -> T {
        self.tol * T::lit(1e3)
    }
}
