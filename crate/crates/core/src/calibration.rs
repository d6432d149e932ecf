//! Moment matching for conditional agents: pick the share intercept and
//! noise scale so a simulated population hits a target mean #Shared and
//! both-zero pair-round rate.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::agents::{AgentPolicy, LaggedState, ReactionCoefficients};
use crate::econometrics::summarize_treatments;
use crate::game_core::{Sequence, TreatmentId, TreatmentSpec};
use crate::session::{run_treatment, Conventions, Pairing, SessionError, TreatmentContext};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean_shared: f64,
    pub both_zero_rate: f64,
    pub accuracy_rate: f64,
    pub falsification_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationTarget {
    pub mean_shared: f64,
    pub both_zero_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationSettings {
    pub seed: u64,
    pub pairs: u32,
    pub conventions: Conventions,
    pub intercept_range: (f64, f64),
    pub noise_range: (f64, f64),
    pub iterations: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            seed: 20240601,
            pairs: 2000,
            conventions: Conventions::default(),
            intercept_range: (-4.0, 6.0),
            noise_range: (0.0, 5.0),
            iterations: 30,
        }
    }
}

/// One sixteen-round treatment for `pairs` homogeneous pairs starting from
/// the default first-round lags.
pub fn simulate_moments(
    coeffs: &ReactionCoefficients,
    treatment: TreatmentId,
    settings: &CalibrationSettings,
) -> Result<Moments, SessionError> {
    let spec = TreatmentSpec::standard(treatment);
    let pairing = Pairing {
        pairs: (0..settings.pairs).map(|k| (2 * k + 1, 2 * k + 2)).collect(),
    };
    let policy = AgentPolicy::Conditional(*coeffs);
    let policies: BTreeMap<u32, AgentPolicy> = (1..=2 * settings.pairs).map(|id| (id, policy.clone())).collect();
    let ctx = TreatmentContext {
        seed: settings.seed,
        session_id: settings.seed,
        sequence: Sequence::Abcd,
        conventions: settings.conventions,
    };
    let start: BTreeMap<u32, LaggedState> = BTreeMap::new();
    let run = run_treatment(&pairing, &policies, &spec, &ctx, &start)?;
    let s = &summarize_treatments(&run.records)[0];
    Ok(Moments {
        mean_shared: s.mean_shared,
        both_zero_rate: s.both_zero_rate,
        accuracy_rate: s.accuracy_rate,
        falsification_rate: s.falsification_rate,
    })
}

fn bisect(mut lo: f64, mut hi: f64, iterations: usize, mut too_low: impl FnMut(f64) -> Result<bool, SessionError>) -> Result<f64, SessionError> {
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if too_low(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Intercept that hits the target mean at a fixed noise scale.
pub fn fit_intercept(
    base: &ReactionCoefficients,
    treatment: TreatmentId,
    target_mean: f64,
    settings: &CalibrationSettings,
) -> Result<ReactionCoefficients, SessionError> {
    let mut c = *base;
    let (lo, hi) = settings.intercept_range;
    c.share.intercept = bisect(lo, hi, settings.iterations, |b| {
        let mut trial = *base;
        trial.share.intercept = b;
        Ok(simulate_moments(&trial, treatment, settings)?.mean_shared < target_mean)
    })?;
    Ok(c)
}

/// Nested search: the outer loop moves the noise scale toward the target
/// both-zero rate, the inner loop re-fits the intercept to the mean.
pub fn calibrate_treatment(
    base: &ReactionCoefficients,
    treatment: TreatmentId,
    target: CalibrationTarget,
    settings: &CalibrationSettings,
) -> Result<(ReactionCoefficients, Moments), SessionError> {
    let (lo, hi) = settings.noise_range;
    let inner = |noise: f64| -> Result<(ReactionCoefficients, Moments), SessionError> {
        let mut trial = *base;
        trial.noise_scale = noise;
        let fitted = fit_intercept(&trial, treatment, target.mean_shared, settings)?;
        let m = simulate_moments(&fitted, treatment, settings)?;
        Ok((fitted, m))
    };
    let noise = bisect(lo, hi, settings.iterations.min(20), |noise| {
        Ok(inner(noise)?.1.both_zero_rate < target.both_zero_rate)
    })?;
    inner(noise)
}
