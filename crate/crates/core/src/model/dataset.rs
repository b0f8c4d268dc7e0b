use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::spec::{ModelSpec, CONSTANT};
use crate::error::{Error, Result};
use crate::outcome::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub observed: Outcome,
    pub x_crash: Vec<f64>,
    pub x_nearcrash: Vec<f64>,
    pub z_scale: Vec<f64>,
}

impl EventRecord {
    pub fn covariates(&self, outcome: Outcome) -> &[f64] {
        match outcome {
            Outcome::Crash => &self.x_crash,
            Outcome::NearCrash => &self.x_nearcrash,
            Outcome::Baseline => &[],
        }
    }

    pub fn covariates_mut(&mut self, outcome: Outcome) -> &mut Vec<f64> {
        match outcome {
            Outcome::Crash => &mut self.x_crash,
            Outcome::NearCrash => &mut self.x_nearcrash,
            Outcome::Baseline => panic!("baseline utility has no covariates"),
        }
    }
}

/// Event-level design: per-outcome covariate vectors laid out to match a
/// [`super::CoefficientLayout`], plus scale covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    pub crash_covariates: Vec<String>,
    pub nearcrash_covariates: Vec<String>,
    pub scale_covariates: Vec<String>,
    pub events: Vec<EventRecord>,
}

/// Where a named attribute shows up in the design.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CovariatePositions {
    pub crash: Option<usize>,
    pub near_crash: Option<usize>,
    pub scale: Option<usize>,
}

impl CovariatePositions {
    pub fn is_empty(&self) -> bool {
        self.crash.is_none() && self.near_crash.is_none() && self.scale.is_none()
    }

    pub fn in_outcome(&self, outcome: Outcome) -> Option<usize> {
        match outcome {
            Outcome::Crash => self.crash,
            Outcome::NearCrash => self.near_crash,
            Outcome::Baseline => None,
        }
    }
}

impl ChoiceDataset {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn names(&self, outcome: Outcome) -> &[String] {
        match outcome {
            Outcome::Crash => &self.crash_covariates,
            Outcome::NearCrash => &self.nearcrash_covariates,
            Outcome::Baseline => &[],
        }
    }

    pub fn positions(&self, name: &str) -> CovariatePositions {
        CovariatePositions {
            crash: self.crash_covariates.iter().position(|n| n == name),
            near_crash: self.nearcrash_covariates.iter().position(|n| n == name),
            scale: self.scale_covariates.iter().position(|n| n == name),
        }
    }

    /// Distinct non-constant attribute names in first-appearance order.
    pub fn attribute_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for n in self
            .crash_covariates
            .iter()
            .chain(&self.nearcrash_covariates)
            .chain(&self.scale_covariates)
        {
            if n != CONSTANT && !out.contains(n) {
                out.push(n.clone());
            }
        }
        out
    }

    /// Values of a named attribute, one per event, read from the first place
    /// it appears.
    pub fn attribute_values(&self, name: &str) -> Option<Vec<f64>> {
        let p = self.positions(name);
        let get: Box<dyn Fn(&EventRecord) -> f64> = if let Some(i) = p.crash {
            Box::new(move |e| e.x_crash[i])
        } else if let Some(i) = p.near_crash {
            Box::new(move |e| e.x_nearcrash[i])
        } else {
            let i = p.scale?;
            Box::new(move |e| e.z_scale[i])
        };
        Some(self.events.iter().map(get).collect())
    }

    pub fn outcome_counts(&self) -> [usize; 3] {
        let mut c = [0usize; 3];
        for e in &self.events {
            c[e.observed.index()] += 1;
        }
        c
    }

    /// Layout consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (nc, nn, ns) = (
            self.crash_covariates.len(),
            self.nearcrash_covariates.len(),
            self.scale_covariates.len(),
        );
        for e in &self.events {
            if e.x_crash.len() != nc || e.x_nearcrash.len() != nn || e.z_scale.len() != ns {
                return Err(Error::layout(format!(
                    "event {} covariate lengths ({}, {}, {}) do not match layout ({nc}, {nn}, {ns})",
                    e.event_id,
                    e.x_crash.len(),
                    e.x_nearcrash.len(),
                    e.z_scale.len()
                )));
            }
            let all = e.x_crash.iter().chain(&e.x_nearcrash).chain(&e.z_scale);
            if all.into_iter().any(|v| !v.is_finite()) {
                return Err(Error::layout(format!("event {} has a non-finite covariate", e.event_id)));
            }
        }
        Ok(())
    }

    pub fn validate_for_estimation(&self) -> Result<()> {
        self.validate()?;
        let counts = self.outcome_counts();
        for o in Outcome::ALL {
            if counts[o.index()] == 0 {
                return Err(Error::param(format!("no {o} events in the estimation sample")));
            }
        }
        Ok(())
    }

    /// Checks the dataset columns line up with what the model spec asks for.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        for outcome in [Outcome::Crash, Outcome::NearCrash] {
            if spec.layout.names(outcome) != self.names(outcome) {
                return Err(Error::layout(format!(
                    "{outcome} covariates {:?} differ from spec layout {:?}",
                    self.names(outcome),
                    spec.layout.names(outcome)
                )));
            }
        }
        if spec.scale_covariates != self.scale_covariates {
            return Err(Error::layout(format!(
                "scale covariates {:?} differ from spec {:?}",
                self.scale_covariates, spec.scale_covariates
            )));
        }
        Ok(())
    }

    pub fn from_table(table: &AttributeTable, spec: &ModelSpec) -> Result<Self> {
        let col: HashMap<&str, usize> = table
            .columns
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let resolve = |names: &[String]| -> Result<Vec<Option<usize>>> {
            names
                .iter()
                .map(|n| {
                    if n == CONSTANT {
                        Ok(None)
                    } else {
                        col.get(n.as_str())
                            .map(|&i| Some(i))
                            .ok_or_else(|| Error::layout(format!("covariate `{n}` not found in data")))
                    }
                })
                .collect()
        };
        let crash_names = spec.layout.names(Outcome::Crash);
        let nc_names = spec.layout.names(Outcome::NearCrash);
        let crash_cols = resolve(&crash_names)?;
        let nc_cols = resolve(&nc_names)?;
        let scale_cols = resolve(&spec.scale_covariates)?;

        let mut events = Vec::with_capacity(table.rows.len());
        for (r, row) in table.rows.iter().enumerate() {
            let pick = |cols: &[Option<usize>], names: &[String]| -> Result<Vec<f64>> {
                cols.iter()
                    .zip(names)
                    .map(|(c, name)| match c {
                        None => Ok(1.0),
                        Some(i) => row.values[*i].filter(|v| v.is_finite()).ok_or_else(|| {
                            Error::schema(r + 1, name.clone(), format!("event {}: missing value", row.event_id))
                        }),
                    })
                    .collect()
            };
            events.push(EventRecord {
                event_id: row.event_id.clone(),
                observed: row.outcome,
                x_crash: pick(&crash_cols, &crash_names)?,
                x_nearcrash: pick(&nc_cols, &nc_names)?,
                z_scale: pick(&scale_cols, &spec.scale_covariates)?,
            });
        }
        let ds = ChoiceDataset {
            crash_covariates: crash_names,
            nearcrash_covariates: nc_names,
            scale_covariates: spec.scale_covariates.clone(),
            events,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Raw event attributes keyed by column name: the joined feature and
/// event-attribute tables before a layout is applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTable {
    pub columns: Vec<String>,
    pub rows: Vec<AttributeRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeRow {
    pub event_id: String,
    pub outcome: Outcome,
    pub values: Vec<Option<f64>>,
}

impl AttributeTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, CoefficientLayout, ModelClass};

    fn table() -> AttributeTable {
        AttributeTable {
            columns: vec!["a".into(), "b".into()],
            rows: vec![
                AttributeRow { event_id: "1".into(), outcome: Outcome::Crash, values: vec![Some(2.0), Some(3.0)] },
                AttributeRow { event_id: "2".into(), outcome: Outcome::Baseline, values: vec![Some(4.0), None] },
            ],
        }
    }

    fn spec(nc: &str) -> ModelSpec {
        ModelSpec::new(
            ModelClass::Mnl,
            CoefficientLayout {
                crash: vec![Coefficient::fixed(CONSTANT), Coefficient::fixed("a")],
                near_crash: vec![Coefficient::fixed(nc)],
            },
        )
    }

    #[test]
    fn builds_design_with_constants() {
        let ds = ChoiceDataset::from_table(&table(), &spec(CONSTANT)).unwrap();
        assert_eq!(ds.events[0].x_crash, vec![1.0, 2.0]);
        assert_eq!(ds.events[1].x_nearcrash, vec![1.0]);
        assert_eq!(ds.attribute_values("a").unwrap(), vec![2.0, 4.0]);
        assert!(ds.attribute_values("zzz").is_none());
    }

    #[test]
    fn missing_value_in_used_column_is_schema_error() {
        let err = ChoiceDataset::from_table(&table(), &spec("b")).unwrap_err();
        assert!(matches!(err, Error::Schema { row: 2, .. }));
    }

    #[test]
    fn unknown_covariate() {
        assert!(matches!(
            ChoiceDataset::from_table(&table(), &spec("nope")),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn estimation_needs_every_outcome() {
        let ds = ChoiceDataset::from_table(&table(), &spec(CONSTANT)).unwrap();
        assert!(ds.validate_for_estimation().is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut ds = ChoiceDataset::from_table(&table(), &spec(CONSTANT)).unwrap();
        ds.events[0].x_crash[1] = f64::NAN;
        assert!(matches!(ds.validate(), Err(Error::Layout(_))));
    }
}
