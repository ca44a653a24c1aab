use crate::scalar::Scalar;

use super::DetectorConfig;

/// Lower bound applied to bin-probability estimates in the statistic's
/// denominator.
pub const PROBABILITY_FLOOR: f64 = 1e-9;

/// Pearson-type discrepancy `Σⱼ (zⱼ - pⱼ)² / max(pⱼ, floor)`, summed in bin
/// order.
#[inline]
pub fn statistic<F: Scalar>(z: &[F], p: &[F]) -> F {
    let floor = F::of(PROBABILITY_FLOOR);
    let mut acc = F::zero();
    for (&zj, &pj) in z.iter().zip(p) {
        let d = zj - pj;
        acc = acc + d * d / pj.max(floor);
    }
    acc
}

/// The per-sample recursion shared by the detector and the Monte Carlo
/// calibration, so both evaluate bit-identical statistics.
#[derive(Debug, Clone, Copy)]
pub struct EwmaParams<F> {
    lambda: F,
    retain: F,
    beta: Option<F>,
    n_train: u64,
    stop_at: Option<u64>,
}

impl<F: Scalar> EwmaParams<F> {
    pub fn new(config: &DetectorConfig, n_train: usize) -> Self {
        let lambda = F::of(config.lambda);
        EwmaParams {
            lambda,
            retain: F::one() - lambda,
            beta: config.beta.map(F::of),
            n_train: n_train as u64,
            stop_at: config.stop_at,
        }
    }

    /// Whether the estimate is updated at step `t` (1-based): only with a
    /// finite-or-infinite `beta` given, and strictly before `N + t` reaches
    /// `stop_at`.
    #[inline]
    pub fn updates_at(&self, t: u64) -> bool {
        self.beta.is_some() && self.stop_at.map_or(true, |s| self.n_train + t < s)
    }

    /// Weight `1 / (β (N + t))` of sample `t` in the probability estimate.
    #[inline]
    pub fn omega(&self, t: u64) -> F {
        match self.beta {
            Some(beta) => F::one() / (beta * F::of((self.n_train + t) as f64)),
            None => F::zero(),
        }
    }

    /// Advance state to step `t` with a sample in `bin`; returns `T_t`.
    ///
    /// The estimate is updated before the statistic is evaluated.
    #[inline]
    pub fn step(&self, t: u64, z: &mut [F], p_hat: &mut [F], bin: usize) -> F {
        for zj in z.iter_mut() {
            *zj = self.retain * *zj;
        }
        z[bin] = z[bin] + self.lambda;
        if self.updates_at(t) {
            let w = self.omega(t);
            let keep = F::one() - w;
            for pj in p_hat.iter_mut() {
                *pj = keep * *pj;
            }
            p_hat[bin] = p_hat[bin] + w;
        }
        statistic(z, p_hat)
    }
}
