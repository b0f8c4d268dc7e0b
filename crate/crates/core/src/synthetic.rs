//! Synthetic data: choice datasets drawn from the model's own data-generating
//! process, and kinematic traces with controllable jerk dispersion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, LogNormal, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{EventTrace, DEFAULT_SAMPLE_PERIOD};
use crate::model::{
    blend_coefficients, choice_probabilities, scale_factor, utilities, AttributeRow, AttributeTable, ChoiceDataset,
    ModelSpec, ParameterSet, CONSTANT,
};
use crate::outcome::Outcome;
use crate::repro::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateDistribution {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Uniform { low: f64, high: f64 },
}

impl CovariateDistribution {
    /// Typical magnitude of a volatility index: mean 1, SD 0.4.
    pub fn volatility() -> Self {
        CovariateDistribution::Normal { mean: 1.0, sd: 0.4 }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            CovariateDistribution::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            CovariateDistribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            CovariateDistribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("covariate `{name}`: improper distribution {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CovariateDistribution::Normal { mean, sd } => {
                let e: f64 = rng.sample(StandardNormal);
                mean + sd * e
            }
            CovariateDistribution::Bernoulli { p } => {
                if Bernoulli::new(p).expect("validated").sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
            CovariateDistribution::Uniform { low, high } => {
                Uniform::new(low, high).expect("validated").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub distribution: CovariateDistribution,
}

impl CovariateSpec {
    pub fn new(name: impl Into<String>, distribution: CovariateDistribution) -> Self {
        CovariateSpec {
            name: name.into(),
            distribution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub spec: ModelSpec,
    pub truth: ParameterSet,
    pub n_events: usize,
    pub covariates: Vec<CovariateSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub table: AttributeTable,
    pub dataset: ChoiceDataset,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::param("n_events must be at least 1"));
        }
        self.spec.validate()?;
        self.truth.conforms(&self.spec)?;
        if let (Some(k), Some(fixed)) = (self.truth.kappa, self.spec.class.fixed_kappa()) {
            if k != fixed {
                return Err(Error::param(format!(
                    "{} fixes kappa at {fixed}, truth has {k}",
                    self.spec.class.label()
                )));
            }
        }
        for (i, c) in self.covariates.iter().enumerate() {
            if c.name == CONSTANT {
                return Err(Error::param("`constant` is implicit and cannot be generated"));
            }
            if self.covariates[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::param(format!("covariate `{}` listed twice", c.name)));
            }
            c.distribution.validate(&c.name)?;
        }
        Ok(())
    }
}

/// Draws covariates, the event's η and ε0, and an observed outcome from the
/// model probabilities. Each event has its own derived seed.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticData> {
    config.validate()?;
    let spec = &config.spec;
    let columns: Vec<String> = config.covariates.iter().map(|c| c.name.clone()).collect();
    let probe = AttributeTable {
        columns: columns.clone(),
        rows: Vec::new(),
    };
    // resolve layout names against the generated columns
    ChoiceDataset::from_table(&probe, spec)?;

    let truth = &config.truth;
    let slots = spec.layout.random_slots();
    let kappa = truth.kappa_or_default();
    let mixes = spec.class.mixes();
    let scales = spec.class.scales();

    let rows: Vec<AttributeRow> = (0..config.n_events)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "synth-event", i as u64));
            let values: Vec<f64> = config.covariates.iter().map(|c| c.distribution.sample(&mut rng)).collect();
            let eta: Vec<f64> = (0..slots.len()).map(|_| rng.sample(StandardNormal)).collect();
            let eps0: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();

            let lookup = |name: &String| -> f64 {
                if name == CONSTANT {
                    1.0
                } else {
                    values[columns.iter().position(|c| c == name).expect("resolved")]
                }
            };
            let x_c: Vec<f64> = spec.layout.crash.iter().map(|c| lookup(&c.name)).collect();
            let x_n: Vec<f64> = spec.layout.near_crash.iter().map(|c| lookup(&c.name)).collect();
            let z: Vec<f64> = spec.scale_covariates.iter().map(lookup).collect();

            let sigma = if scales {
                scale_factor(&truth.theta, &z, truth.tau, eps0).expect("validated inputs")
            } else {
                1.0
            };
            let mut w_c = vec![0.0; x_c.len()];
            let mut w_n = vec![0.0; x_n.len()];
            if mixes {
                for (r, slot) in slots.iter().enumerate() {
                    let w = truth.omega_sd[r] * eta[r];
                    match slot.outcome {
                        Outcome::Crash => w_c[slot.index] = w,
                        _ => w_n[slot.index] = w,
                    }
                }
            }
            let b_c = blend_coefficients(&truth.beta_crash, &w_c, sigma, kappa).expect("validated inputs");
            let b_n = blend_coefficients(&truth.beta_nearcrash, &w_n, sigma, kappa).expect("validated inputs");
            let v = utilities(&b_c, &x_c, &b_n, &x_n).expect("validated inputs");
            let p = choice_probabilities(v);
            let outcome = if u < p[0] {
                Outcome::Baseline
            } else if u < p[0] + p[1] {
                Outcome::NearCrash
            } else {
                Outcome::Crash
            };
            AttributeRow {
                event_id: format!("syn{:06}", i + 1),
                outcome,
                values: values.into_iter().map(Some).collect(),
            }
        })
        .collect();

    let table = AttributeTable { columns, rows };
    let dataset = ChoiceDataset::from_table(&table, spec)?;
    Ok(SyntheticData { table, dataset })
}

/// Controls for synthetic 10 Hz traces.
///
/// Jerk magnitudes are log-normal with the requested coefficient of
/// variation and signs drawn independently of magnitude, so the CV of each
/// sign partition targets `jerk_cv_*`. Accelerations integrate the jerk, and
/// speed integrates the longitudinal acceleration.
///
/// Fields missing from a JSON config take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub n_events: usize,
    pub samples: usize,
    pub sample_period: f64,
    /// Shares of (baseline, near-crash, crash) events.
    pub outcome_shares: [f64; 3],
    pub mean_speed_kph: f64,
    /// Mean jerk magnitude, m/s³; zero gives constant acceleration.
    pub jerk_scale_long: f64,
    pub jerk_cv_long: f64,
    pub jerk_scale_lat: f64,
    pub jerk_cv_lat: f64,
    /// Share of safety-critical events with no reaction marker.
    pub no_reaction_share: f64,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            n_events: 100,
            samples: 300,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            outcome_shares: [0.8, 0.15, 0.05],
            mean_speed_kph: 50.0,
            jerk_scale_long: 1.0,
            jerk_cv_long: 1.05,
            jerk_scale_lat: 0.6,
            jerk_cv_lat: 0.9,
            no_reaction_share: 0.145,
            seed: 0,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 3 {
            return Err(Error::InvalidTarget(format!("{} samples cannot carry a jerk series", self.samples)));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(Error::InvalidTarget("sample period must be positive".into()));
        }
        let shares_ok = self.outcome_shares.iter().all(|s| *s >= 0.0 && s.is_finite())
            && self.outcome_shares.iter().sum::<f64>() > 0.0;
        if !shares_ok {
            return Err(Error::InvalidTarget("outcome shares must be non-negative with a positive sum".into()));
        }
        if !(0.0..=1.0).contains(&self.no_reaction_share) {
            return Err(Error::InvalidTarget("no_reaction_share outside [0, 1]".into()));
        }
        if !(self.mean_speed_kph >= 0.0 && self.mean_speed_kph.is_finite()) {
            return Err(Error::InvalidTarget("mean speed must be non-negative".into()));
        }
        for (axis, scale, cv) in [
            ("longitudinal", self.jerk_scale_long, self.jerk_cv_long),
            ("lateral", self.jerk_scale_lat, self.jerk_cv_lat),
        ] {
            if !(scale >= 0.0 && scale.is_finite()) || !(cv >= 0.0 && cv.is_finite()) {
                return Err(Error::InvalidTarget(format!("{axis} jerk scale and CV must be finite and ≥ 0")));
            }
            if scale == 0.0 && cv > 0.0 {
                return Err(Error::InvalidTarget(format!(
                    "{axis} jerk CV {cv} requested with a constant acceleration series"
                )));
            }
        }
        Ok(())
    }
}

fn jerk_series(rng: &mut ChaCha8Rng, n: usize, scale: f64, cv: f64, dt: f64) -> Vec<f64> {
    let mut accel = vec![0.0; n];
    if scale == 0.0 {
        return accel;
    }
    // log-normal with mean `scale` and CV `cv`
    let s2 = (1.0 + cv * cv).ln();
    let magnitude = LogNormal::new(scale.ln() - s2 / 2.0, s2.sqrt()).expect("finite parameters");
    // typical acceleration excursion the sign rule pulls back from
    let spread = 2.0 * scale * dt * (n as f64).sqrt().max(1.0);
    for k in 0..n - 1 {
        let m = magnitude.sample(rng);
        let p_up = 0.5 - 0.4 * (accel[k] / spread).tanh();
        let sign = if rng.random::<f64>() < p_up { 1.0 } else { -1.0 };
        accel[k + 1] = accel[k] + sign * m * dt;
    }
    accel
}

pub fn generate_traces(config: &TraceConfig) -> Result<Vec<EventTrace>> {
    config.validate()?;
    let total: f64 = config.outcome_shares.iter().sum();
    let n = config.samples;
    let dt = config.sample_period;
    Ok((0..config.n_events)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "synth-trace", i as u64));
            let u: f64 = rng.random::<f64>() * total;
            let event_type = if u < config.outcome_shares[0] {
                Outcome::Baseline
            } else if u < config.outcome_shares[0] + config.outcome_shares[1] {
                Outcome::NearCrash
            } else {
                Outcome::Crash
            };
            let accel_longitudinal = jerk_series(&mut rng, n, config.jerk_scale_long, config.jerk_cv_long, dt);
            let accel_lateral = jerk_series(&mut rng, n, config.jerk_scale_lat, config.jerk_cv_lat, dt);
            let jitter = Normal::new(0.0, 0.1 * config.mean_speed_kph.max(1.0)).expect("finite sd");
            let mut speed = Vec::with_capacity(n);
            let mut v = (config.mean_speed_kph + jitter.sample(&mut rng)).max(0.0);
            for a in &accel_longitudinal {
                speed.push(v);
                v = (v + a * dt * 3.6).max(0.0);
            }
            let (reaction_index, impact_index) = match event_type {
                Outcome::Baseline => (None, None),
                _ => {
                    let impact = rng.random_range((n * 3 / 4).max(2)..n);
                    let reaction = if rng.random::<f64>() < config.no_reaction_share {
                        None
                    } else {
                        Some(rng.random_range((impact / 2).max(2)..impact))
                    };
                    (reaction, Some(impact))
                }
            };
            EventTrace {
                event_id: format!("trace{:06}", i + 1),
                event_type,
                sample_period: dt,
                speed,
                accel_longitudinal,
                accel_lateral,
                reaction_index,
                impact_index,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::volatility_indices;
    use crate::model::{Coefficient, CoefficientLayout, ModelClass};

    fn mnl_config(beta_c: Vec<f64>, n: usize) -> GeneratorConfig {
        let layout = CoefficientLayout {
            crash: vec![Coefficient::fixed(CONSTANT), Coefficient::fixed("x")],
            near_crash: vec![Coefficient::fixed(CONSTANT)],
        };
        let spec = ModelSpec::new(ModelClass::Mnl, layout);
        let mut truth = ParameterSet::zeros(&spec);
        truth.beta_crash = beta_c;
        GeneratorConfig {
            spec,
            truth,
            n_events: n,
            covariates: vec![CovariateSpec::new("x", CovariateDistribution::volatility())],
            seed: 11,
        }
    }

    #[test]
    fn symmetric_dgp_gives_equal_shares() {
        let n = 30_000;
        let d = generate(&mnl_config(vec![0.0, 0.0], n)).unwrap();
        let c = d.dataset.outcome_counts();
        let sd = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for k in c {
            assert!((k as f64 - n as f64 / 3.0).abs() < 3.0 * sd, "{c:?}");
        }
    }

    #[test]
    fn dominant_intercept() {
        let d = generate(&mnl_config(vec![30.0, 0.0], 500)).unwrap();
        assert_eq!(d.dataset.outcome_counts(), [0, 0, 500]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = mnl_config(vec![-1.0, 0.5], 200);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(generate(&cfg).unwrap().table, generate(&other).unwrap().table);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = mnl_config(vec![0.0, 0.0], 10);
        cfg.n_events = 0;
        assert!(generate(&cfg).is_err());
        let mut cfg = mnl_config(vec![0.0], 10);
        assert!(generate(&cfg).is_err());
        cfg = mnl_config(vec![0.0, 0.0], 10);
        cfg.covariates[0].distribution = CovariateDistribution::Uniform { low: 1.0, high: 1.0 };
        assert!(generate(&cfg).is_err());
        cfg.covariates.clear();
        assert!(matches!(generate(&cfg), Err(Error::Layout(_))));
    }

    #[test]
    fn traces_hit_jerk_target() {
        let cfg = TraceConfig {
            n_events: 60,
            outcome_shares: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        let traces = generate_traces(&cfg).unwrap();
        let mean = traces
            .iter()
            .map(|t| volatility_indices(t).unwrap().cv_jerk_pos_long.unwrap())
            .sum::<f64>()
            / traces.len() as f64;
        assert!((mean - 1.05).abs() < 0.105, "mean cv {mean}");
    }

    #[test]
    fn zero_dispersion_traces() {
        let cfg = TraceConfig {
            n_events: 5,
            jerk_scale_long: 0.0,
            jerk_cv_long: 0.0,
            jerk_scale_lat: 1.0,
            jerk_cv_lat: 0.0,
            ..Default::default()
        };
        for t in generate_traces(&cfg).unwrap() {
            let v = volatility_indices(&t).unwrap();
            assert!(v.cv_jerk_pos_long.is_none() && v.cv_jerk_neg_long.is_none());
            for c in [v.cv_jerk_pos_lat, v.cv_jerk_neg_lat].into_iter().flatten() {
                assert!(c < 1e-9, "{c}");
            }
        }
        let bad = TraceConfig {
            jerk_scale_long: 0.0,
            jerk_cv_long: 0.5,
            ..Default::default()
        };
        assert!(matches!(generate_traces(&bad), Err(Error::InvalidTarget(_))));
    }

    #[test]
    fn traces_are_valid_and_deterministic() {
        let cfg = TraceConfig {
            n_events: 40,
            outcome_shares: [0.3, 0.4, 0.3],
            ..Default::default()
        };
        let a = generate_traces(&cfg).unwrap();
        assert_eq!(a, generate_traces(&cfg).unwrap());
        for t in &a {
            t.validate().unwrap();
            assert!(volatility_indices(t).is_ok());
        }
        assert!(a.iter().any(|t| t.event_type != Outcome::Baseline));
    }
}
