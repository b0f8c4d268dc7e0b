//! Event kinematics: censoring, finite-difference derivatives and the
//! coefficient-of-variation volatility indices.
//!
//! Safety-critical traces are cut at the moment the driver starts reacting
//! (or at impact when there was no reaction before it), so the indices only
//! describe driving that precedes the evasive manoeuvre.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcome::Outcome;

pub type EventType = Outcome;

pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.1;
const KPH_TO_MPS: f64 = 1.0 / 3.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub event_id: String,
    pub event_type: EventType,
    /// Seconds between samples.
    pub sample_period: f64,
    /// kph
    pub speed: Vec<f64>,
    /// m/s²
    pub accel_longitudinal: Vec<f64>,
    /// m/s²
    pub accel_lateral: Vec<f64>,
    /// First sample at which the driver reacts.
    pub reaction_index: Option<usize>,
    /// Sample of impact (or closest approach for near-crashes).
    pub impact_index: Option<usize>,
}

impl EventTrace {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidTrace {
            event_id: self.event_id.clone(),
            reason,
        };
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(bad(format!("sample period {} must be positive", self.sample_period)));
        }
        let n = self.speed.len();
        if self.accel_longitudinal.len() != n || self.accel_lateral.len() != n {
            return Err(bad(format!(
                "series lengths differ: speed {}, accel_long {}, accel_lat {}",
                n,
                self.accel_longitudinal.len(),
                self.accel_lateral.len()
            )));
        }
        if n < 2 {
            return Err(bad(format!("{n} samples, need at least 2")));
        }
        let all = self
            .speed
            .iter()
            .chain(&self.accel_longitudinal)
            .chain(&self.accel_lateral);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite sample".into()));
        }
        for (name, idx) in [("reaction", self.reaction_index), ("impact", self.impact_index)] {
            if let Some(i) = idx {
                if i >= n {
                    return Err(bad(format!("{name} index {i} outside {n} samples")));
                }
            }
        }
        match self.event_type {
            Outcome::Baseline => {
                if self.reaction_index.is_some() || self.impact_index.is_some() {
                    return Err(bad("baseline events carry no reaction/impact markers".into()));
                }
            }
            _ => {
                if self.impact_index.is_none() {
                    return Err(bad(format!("{} event without impact marker", self.event_type)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensoredTrace {
    pub event_id: String,
    pub event_type: EventType,
    pub sample_period: f64,
    pub speed: Vec<f64>,
    pub accel_longitudinal: Vec<f64>,
    pub accel_lateral: Vec<f64>,
    pub retained_count: usize,
}

/// Ten per-event features. `None` marks a missing component (empty or
/// single-sample sign partition, zero mean).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VolatilityVector {
    pub cv_accel_long: Option<f64>,
    pub cv_decel_long: Option<f64>,
    pub cv_accel_lat: Option<f64>,
    pub cv_decel_lat: Option<f64>,
    pub cv_jerk_pos_long: Option<f64>,
    pub cv_jerk_neg_long: Option<f64>,
    pub cv_jerk_pos_lat: Option<f64>,
    pub cv_jerk_neg_lat: Option<f64>,
    pub mean_speed: Option<f64>,
    pub cv_speed: Option<f64>,
}

impl VolatilityVector {
    pub const FIELD_NAMES: [&'static str; 10] = [
        "cv_accel_long",
        "cv_decel_long",
        "cv_accel_lat",
        "cv_decel_lat",
        "cv_jerk_pos_long",
        "cv_jerk_neg_long",
        "cv_jerk_pos_lat",
        "cv_jerk_neg_lat",
        "mean_speed",
        "cv_speed",
    ];

    pub fn values(&self) -> [Option<f64>; 10] {
        [
            self.cv_accel_long,
            self.cv_decel_long,
            self.cv_accel_lat,
            self.cv_decel_lat,
            self.cv_jerk_pos_long,
            self.cv_jerk_neg_long,
            self.cv_jerk_pos_lat,
            self.cv_jerk_neg_lat,
            self.mean_speed,
            self.cv_speed,
        ]
    }

    pub fn from_values(v: [Option<f64>; 10]) -> Self {
        VolatilityVector {
            cv_accel_long: v[0],
            cv_decel_long: v[1],
            cv_accel_lat: v[2],
            cv_decel_lat: v[3],
            cv_jerk_pos_long: v[4],
            cv_jerk_neg_long: v[5],
            cv_jerk_pos_lat: v[6],
            cv_jerk_neg_lat: v[7],
            mean_speed: v[8],
            cv_speed: v[9],
        }
    }

    pub fn get(&self, name: &str) -> Option<Option<f64>> {
        Self::FIELD_NAMES
            .iter()
            .position(|f| *f == name)
            .map(|i| self.values()[i])
    }
}

/// Forward first difference divided by `dt`.
pub fn derive_series(values: &[f64], dt: f64) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::DegenerateSeries(values.len()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param(format!("time step {dt} must be positive")));
    }
    Ok(values.windows(2).map(|w| (w[1] - w[0]) / dt).collect())
}

/// Acceleration from a kph speed series.
pub fn acceleration_from_speed(speed_kph: &[f64], dt: f64) -> Result<Vec<f64>> {
    let mps: Vec<f64> = speed_kph.iter().map(|v| v * KPH_TO_MPS).collect();
    derive_series(&mps, dt)
}

/// Number of leading samples kept for volatility computation.
pub fn retained_length(trace: &EventTrace) -> usize {
    match trace.event_type {
        Outcome::Baseline => trace.len(),
        _ => {
            let impact = trace.impact_index.unwrap_or(trace.len());
            match trace.reaction_index {
                Some(r) if r < impact => r,
                // no reaction, or reaction at/after impact
                _ => impact,
            }
        }
    }
}

pub fn censor(trace: &EventTrace) -> Result<CensoredTrace> {
    trace.validate()?;
    let keep = retained_length(trace);
    if keep < 2 {
        return Err(Error::InsufficientData {
            event_id: trace.event_id.clone(),
            retained: keep,
        });
    }
    Ok(CensoredTrace {
        event_id: trace.event_id.clone(),
        event_type: trace.event_type,
        sample_period: trace.sample_period,
        speed: trace.speed[..keep].to_vec(),
        accel_longitudinal: trace.accel_longitudinal[..keep].to_vec(),
        accel_lateral: trace.accel_lateral[..keep].to_vec(),
        retained_count: keep,
    })
}

/// Splits into strictly positive values and magnitudes of strictly negative
/// values. Exact zeros belong to neither side.
pub fn sign_partition(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for &v in values {
        if v > 0.0 {
            pos.push(v);
        } else if v < 0.0 {
            neg.push(-v);
        }
    }
    (pos, neg)
}

/// Sample standard deviation over arithmetic mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::MissingComponent("fewer than two samples"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(Error::MissingComponent("zero mean"));
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    Ok(sd / mean.abs())
}

fn partition_cvs(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let (pos, neg) = sign_partition(values);
    (
        coefficient_of_variation(&pos).ok(),
        coefficient_of_variation(&neg).ok(),
    )
}

pub fn volatility_indices(trace: &EventTrace) -> Result<VolatilityVector> {
    let c = censor(trace)?;
    let dt = c.sample_period;
    let jerk_long = derive_series(&c.accel_longitudinal, dt)?;
    let jerk_lat = derive_series(&c.accel_lateral, dt)?;

    let (cv_accel_long, cv_decel_long) = partition_cvs(&c.accel_longitudinal);
    let (cv_accel_lat, cv_decel_lat) = partition_cvs(&c.accel_lateral);
    let (cv_jerk_pos_long, cv_jerk_neg_long) = partition_cvs(&jerk_long);
    let (cv_jerk_pos_lat, cv_jerk_neg_lat) = partition_cvs(&jerk_lat);

    let mean_speed = c.speed.iter().sum::<f64>() / c.speed.len() as f64;
    Ok(VolatilityVector {
        cv_accel_long,
        cv_decel_long,
        cv_accel_lat,
        cv_decel_lat,
        cv_jerk_pos_long,
        cv_jerk_neg_long,
        cv_jerk_pos_lat,
        cv_jerk_neg_lat,
        mean_speed: Some(mean_speed),
        cv_speed: coefficient_of_variation(&c.speed).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn baseline(speed: Vec<f64>, al: Vec<f64>, at: Vec<f64>) -> EventTrace {
        EventTrace {
            event_id: "e".into(),
            event_type: Outcome::Baseline,
            sample_period: 0.1,
            speed,
            accel_longitudinal: al,
            accel_lateral: at,
            reaction_index: None,
            impact_index: None,
        }
    }

    fn crash(n: usize, reaction: Option<usize>, impact: usize) -> EventTrace {
        EventTrace {
            event_id: "c".into(),
            event_type: Outcome::Crash,
            sample_period: 0.1,
            speed: vec![40.0; n],
            accel_longitudinal: (0..n).map(|i| (i as f64 * 0.7).sin()).collect(),
            accel_lateral: (0..n).map(|i| (i as f64 * 0.3).cos()).collect(),
            reaction_index: reaction,
            impact_index: Some(impact),
        }
    }

    #[test]
    fn derive_examples() {
        let j = derive_series(&[0.0, 1.0, 2.0], 0.1).unwrap();
        assert_eq!(j.len(), 2);
        assert_relative_eq!(j[0], 10.0, epsilon = 1e-12);
        assert_relative_eq!(j[1], 10.0, epsilon = 1e-12);
        assert_eq!(derive_series(&[3.0, 3.0, 3.0], 0.1).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(derive_series(&[5.0], 0.1), Err(Error::DegenerateSeries(1))));
    }

    #[test]
    fn speed_is_converted_to_mps() {
        let a = acceleration_from_speed(&[36.0, 39.6], 0.1).unwrap();
        assert_relative_eq!(a[0], 10.0, epsilon = 1e-9);
    }

    #[test]
    fn censor_reaction_before_impact() {
        let c = censor(&crash(300, Some(235), 250)).unwrap();
        assert_eq!(c.retained_count, 235);
        assert_eq!(c.speed.len(), 235);
    }

    #[test]
    fn censor_without_reaction_uses_impact() {
        assert_eq!(censor(&crash(300, None, 250)).unwrap().retained_count, 250);
    }

    #[test]
    fn censor_reaction_at_or_after_impact_uses_impact() {
        assert_eq!(censor(&crash(300, Some(250), 250)).unwrap().retained_count, 250);
        assert_eq!(censor(&crash(300, Some(280), 250)).unwrap().retained_count, 250);
    }

    #[test]
    fn censor_baseline_keeps_everything() {
        let t = baseline(vec![50.0; 200], vec![0.1; 200], vec![0.0; 200]);
        assert_eq!(censor(&t).unwrap().retained_count, 200);
    }

    #[test]
    fn censor_too_short() {
        let err = censor(&crash(10, Some(1), 5)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { retained: 1, .. }));
    }

    #[test]
    fn marker_validation() {
        let mut t = crash(10, None, 5);
        t.impact_index = None;
        assert!(t.validate().is_err());
        let mut b = baseline(vec![1.0; 4], vec![0.0; 4], vec![0.0; 4]);
        b.reaction_index = Some(1);
        assert!(b.validate().is_err());
        let mut c = crash(10, None, 5);
        c.impact_index = Some(10);
        assert!(c.validate().is_err());
    }

    #[test]
    fn partition_examples() {
        assert_eq!(sign_partition(&[-1.0, 2.0, 0.0, -3.0]), (vec![2.0], vec![1.0, 3.0]));
        assert_eq!(sign_partition(&[4.0, 4.0]), (vec![4.0, 4.0], vec![]));
        assert_eq!(sign_partition(&[]), (vec![], vec![]));
    }

    #[test]
    fn cv_examples() {
        assert_relative_eq!(coefficient_of_variation(&[1.0, 2.0, 3.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(coefficient_of_variation(&[7.0, 7.0, 7.0]).unwrap(), 0.0);
        assert!(matches!(coefficient_of_variation(&[5.0]), Err(Error::MissingComponent(_))));
        assert!(matches!(coefficient_of_variation(&[0.0, 0.0]), Err(Error::MissingComponent(_))));
    }

    #[test]
    fn constant_motion_baseline() {
        let t = baseline(vec![50.0; 50], vec![0.0; 50], vec![0.0; 50]);
        let v = volatility_indices(&t).unwrap();
        assert_eq!(v.mean_speed, Some(50.0));
        assert_eq!(v.cv_speed, Some(0.0));
        assert_eq!(v.cv_accel_long, None);
        assert_eq!(v.cv_decel_long, None);
        assert_eq!(v.cv_jerk_pos_long, None);
        assert_eq!(v.cv_jerk_neg_lat, None);
    }

    #[test]
    fn three_sample_hand_walk() {
        // accel_long [1, 3, -2]: pos [1,3] -> sd sqrt(2), mean 2; neg [2] -> missing
        // jerk_long [20, -50]: both sides single -> missing
        // accel_lat [0.5, 0.5, 1.0]: pos [0.5,0.5,1] mean 2/3, sd sqrt(1/12)
        // jerk_lat [0, 5]: pos [5] -> missing
        let t = baseline(vec![10.0, 20.0, 30.0], vec![1.0, 3.0, -2.0], vec![0.5, 0.5, 1.0]);
        let v = volatility_indices(&t).unwrap();
        assert_relative_eq!(v.cv_accel_long.unwrap(), 2f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(v.cv_decel_long, None);
        assert_relative_eq!(v.cv_accel_lat.unwrap(), (1.0f64 / 12.0).sqrt() / (2.0 / 3.0), epsilon = 1e-15);
        assert_eq!(v.cv_decel_lat, None);
        assert_eq!(v.cv_jerk_pos_long, None);
        assert_eq!(v.cv_jerk_neg_long, None);
        assert_eq!(v.cv_jerk_pos_lat, None);
        assert_eq!(v.mean_speed, Some(20.0));
        assert_relative_eq!(v.cv_speed.unwrap(), 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn cv_is_scale_free(xs in prop::collection::vec(0.01f64..10.0, 2..40), c in 0.01f64..100.0) {
            let a = coefficient_of_variation(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let b = coefficient_of_variation(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn negation_swaps_partitions(xs in prop::collection::vec(-5.0f64..5.0, 0..40)) {
            let (p, n) = sign_partition(&xs);
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            let (p2, n2) = sign_partition(&neg);
            prop_assert_eq!(p, n2);
            prop_assert_eq!(n, p2);
        }

        #[test]
        fn jerk_length(n in 2usize..60) {
            let speed: Vec<f64> = (0..n).map(|i| 30.0 + i as f64).collect();
            let accel = acceleration_from_speed(&speed, 0.1).unwrap();
            prop_assert_eq!(accel.len(), n - 1);
            if accel.len() >= 2 {
                prop_assert_eq!(derive_series(&accel, 0.1).unwrap().len(), n - 2);
            }
        }

        #[test]
        fn censoring_never_grows(n in 3usize..400, r in 0usize..400, i in 0usize..400, has_r: bool) {
            let impact = i % n;
            let t = EventTrace {
                reaction_index: if has_r { Some(r % n) } else { None },
                ..crash(n, None, impact)
            };
            prop_assert!(retained_length(&t) <= t.len());
        }
    }

    #[test]
    fn shifting_a_one_sided_series_changes_cv() {
        let xs = [1.0, 2.0, 4.0, 3.0];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 5.0).collect();
        let a = coefficient_of_variation(&xs).unwrap();
        let b = coefficient_of_variation(&shifted).unwrap();
        assert!((a - b).abs() > 0.1);
    }
}
