//! Post-estimation analysis: average marginal effects, mean simulated
//! probability curves over a covariate grid, and perturbation scenarios.
//!
//! Every quantity integrates over the same draw block the fit used, so the
//! predictions are consistent with the reported likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{DrawBlock, FitResult, Simulator};
use crate::model::{ChoiceDataset, EventRecord, ModelSpec, ParameterSet};
use crate::outcome::Outcome;
use crate::repro::ordered_sum_with_vec;

/// Fitted model bound to a dataset and its draw block.
#[derive(Debug)]
pub struct Predictor<'a> {
    spec: &'a ModelSpec,
    params: &'a ParameterSet,
    data: &'a ChoiceDataset,
    draws: DrawBlock,
}

impl<'a> Predictor<'a> {
    /// Requires a converged fit unless `force` is set.
    pub fn new(fit: &'a FitResult, data: &'a ChoiceDataset, force: bool) -> Result<Self> {
        if !fit.converged && !force {
            return Err(Error::NotFitted);
        }
        Self::from_parameters(&fit.spec, &fit.estimates, data)
    }

    pub fn from_parameters(spec: &'a ModelSpec, params: &'a ParameterSet, data: &'a ChoiceDataset) -> Result<Self> {
        spec.validate()?;
        params.conforms(spec)?;
        data.check_against(spec)?;
        data.validate()?;
        if data.is_empty() {
            return Err(Error::param("dataset has no events"));
        }
        let draws = DrawBlock::for_spec(spec, data.len())?;
        Ok(Predictor {
            spec,
            params,
            data,
            draws,
        })
    }

    pub fn data(&self) -> &ChoiceDataset {
        self.data
    }

    fn simulator(&self) -> Simulator<'_> {
        Simulator::new(self.spec, self.data, &self.draws).expect("checked at construction")
    }

    /// Mean over events of `f(i, probabilities for the edited record)`.
    fn mean_over_events<F>(&self, edit: F) -> [f64; 3]
    where
        F: Fn(usize, &EventRecord, &Simulator<'_>, &mut [f64]) + Sync,
    {
        let sim = self.simulator();
        let (_, sums) = ordered_sum_with_vec(self.data.len(), 3, |i, acc| {
            edit(i, &self.data.events[i], &sim, acc);
            0.0
        });
        let n = self.data.len() as f64;
        [sums[0] / n, sums[1] / n, sums[2] / n]
    }

    /// Mean simulated probabilities with covariates as observed.
    pub fn mean_probabilities(&self) -> [f64; 3] {
        self.mean_over_events(|i, _, sim, acc| {
            let p = sim.event_probabilities(self.params, i);
            acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
        })
    }

    pub fn event_probabilities(&self) -> Vec<[f64; 3]> {
        let sim = self.simulator();
        (0..self.data.len()).map(|i| sim.event_probabilities(self.params, i)).collect()
    }

    fn require_attribute(&self, name: &str) -> Result<()> {
        if self.data.positions(name).is_empty() {
            return Err(Error::layout(format!(
                "unknown covariate `{name}`; valid names: {}",
                self.data.attribute_names().join(", ")
            )));
        }
        Ok(())
    }

    pub fn marginal_effects(&self) -> MarginalEffectTable {
        let effects = self
            .data
            .attribute_names()
            .iter()
            .map(|name| self.marginal_effect(name).expect("name from the dataset"))
            .collect();
        MarginalEffectTable { effects }
    }

    /// Average marginal effect of one attribute, changed everywhere it
    /// enters the model.
    pub fn marginal_effect(&self, name: &str) -> Result<MarginalEffect> {
        self.require_attribute(name)?;
        let pos = self.data.positions(name);
        let values = self.data.attribute_values(name).expect("attribute present");
        let binary = values.iter().all(|v| *v == 0.0 || *v == 1.0);
        let effects = self.mean_over_events(|i, e, sim, acc| {
            let (lo, hi, width) = if binary {
                (0.0, 1.0, 1.0)
            } else {
                let x = values[i];
                let h = (1e-4 * x.abs()).max(1e-4);
                (x - h, x + h, 2.0 * h)
            };
            let mut r = e.clone();
            set_attribute(&mut r, &pos, lo);
            let p_lo = sim.probabilities_for(self.params, &r, i);
            set_attribute(&mut r, &pos, hi);
            let p_hi = sim.probabilities_for(self.params, &r, i);
            for k in 0..3 {
                acc[k] += (p_hi[k] - p_lo[k]) / width;
            }
        });
        Ok(MarginalEffect {
            covariate: name.to_string(),
            kind: if binary { EffectKind::DiscreteChange } else { EffectKind::Continuous },
            effects,
        })
    }

    /// Mean probabilities with the attribute set to each grid value for every
    /// event.
    pub fn probability_curve(&self, name: &str, grid: &[f64]) -> Result<ProbabilityCurve> {
        self.require_attribute(name)?;
        if grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::param("grid values must be finite"));
        }
        let pos = self.data.positions(name);
        let values = self.data.attribute_values(name).expect("attribute present");
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut warnings = Vec::new();
        let outside = grid.iter().filter(|g| **g < lo || **g > hi).count();
        if outside > 0 {
            warnings.push(format!(
                "{outside} grid values lie outside the observed range [{lo}, {hi}] of `{name}`"
            ));
        }
        let points = grid
            .iter()
            .map(|&g| {
                let probabilities = self.mean_over_events(|i, e, sim, acc| {
                    let mut r = e.clone();
                    set_attribute(&mut r, &pos, g);
                    let p = sim.probabilities_for(self.params, &r, i);
                    acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
                });
                CurvePoint {
                    value: g,
                    probabilities,
                }
            })
            .collect();
        Ok(ProbabilityCurve {
            covariate: name.to_string(),
            points,
            warnings,
        })
    }

    /// Sample SD of the attribute as it enters the targeted utility.
    pub fn covariate_sd(&self, name: &str, target: Outcome) -> Result<f64> {
        let j = self.target_position(name, target)?;
        let xs: Vec<f64> = self.data.events.iter().map(|e| e.covariates(target)[j]).collect();
        let n = xs.len() as f64;
        if xs.len() < 2 {
            return Err(Error::InvalidScenario("SD needs at least two events".into()));
        }
        let m = xs.iter().sum::<f64>() / n;
        Ok((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt())
    }

    fn target_position(&self, name: &str, target: Outcome) -> Result<usize> {
        if target == Outcome::Baseline {
            return Err(Error::InvalidScenario("the baseline utility has no covariates".into()));
        }
        self.data.positions(name).in_outcome(target).ok_or_else(|| {
            Error::InvalidScenario(format!(
                "`{name}` is not in the {target} utility; it has: {}",
                self.data.names(target).join(", ")
            ))
        })
    }

    /// Mean probabilities after applying a perturbation to one utility.
    pub fn perturbed_shares(&self, p: &Perturbation) -> Result<[f64; 3]> {
        let j = self.target_position(&p.covariate, p.target)?;
        let sd = match p.mode {
            PerturbationMode::Sd => self.covariate_sd(&p.covariate, p.target)?,
            PerturbationMode::Percent => 0.0,
        };
        if !p.amount.is_finite() {
            return Err(Error::InvalidScenario("perturbation amount must be finite".into()));
        }
        Ok(self.mean_over_events(|i, e, sim, acc| {
            let mut r = e.clone();
            let x = &mut r.covariates_mut(p.target)[j];
            *x = p.apply(*x, sd);
            let pr = sim.probabilities_for(self.params, &r, i);
            acc.iter_mut().zip(pr).for_each(|(a, v)| *a += v);
        }))
    }

    /// Baseline row followed by one row per perturbation. Counts are
    /// shares of `denominator` events (default: dataset size).
    pub fn scenarios(&self, perturbations: &[Perturbation], denominator: Option<usize>) -> Result<ScenarioReport> {
        let denominator = denominator.unwrap_or(self.data.len());
        let base = self.mean_probabilities();
        let baseline = ScenarioResult::new("No change (baseline)".into(), None, base, base, denominator);
        let mut rows = vec![baseline];
        for p in perturbations {
            let shares = self.perturbed_shares(p)?;
            rows.push(ScenarioResult::new(p.label(), Some(p.clone()), shares, base, denominator));
        }
        Ok(ScenarioReport { denominator, rows })
    }
}

fn set_attribute(r: &mut EventRecord, pos: &crate::model::CovariatePositions, v: f64) {
    if let Some(j) = pos.crash {
        r.x_crash[j] = v;
    }
    if let Some(j) = pos.near_crash {
        r.x_nearcrash[j] = v;
    }
    if let Some(j) = pos.scale {
        r.z_scale[j] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Continuous,
    DiscreteChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub covariate: String,
    pub kind: EffectKind,
    /// Effects on (baseline, near-crash, crash) probabilities.
    pub effects: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffectTable {
    pub effects: Vec<MarginalEffect>,
}

impl MarginalEffectTable {
    pub fn get(&self, covariate: &str) -> Option<&MarginalEffect> {
        self.effects.iter().find(|e| e.covariate == covariate)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["covariate", "kind", "baseline", "near_crash", "crash"])?;
        for e in &self.effects {
            let kind = match e.kind {
                EffectKind::Continuous => "continuous",
                EffectKind::DiscreteChange => "discrete_change",
            };
            w.write_record([
                e.covariate.clone(),
                kind.to_string(),
                e.effects[0].to_string(),
                e.effects[1].to_string(),
                e.effects[2].to_string(),
            ])?;
        }
        csv_string(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: f64,
    pub probabilities: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityCurve {
    pub covariate: String,
    pub points: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

impl ProbabilityCurve {
    pub fn series(&self, outcome: Outcome) -> Vec<f64> {
        self.points.iter().map(|p| p.probabilities[outcome.index()]).collect()
    }

    /// Tidy layout: one row per grid value and outcome.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["grid_value", "outcome", "mean_probability"])?;
        for p in &self.points {
            for o in Outcome::ALL {
                w.write_record([p.value.to_string(), o.as_str().to_string(), p.probabilities[o.index()].to_string()])?;
            }
        }
        csv_string(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// Multiply by `1 - amount/100`.
    Percent,
    /// Subtract `amount` sample standard deviations.
    Sd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub covariate: String,
    pub mode: PerturbationMode,
    pub amount: f64,
    /// Utility whose copy of the covariate is changed.
    pub target: Outcome,
}

impl Perturbation {
    pub fn percent(covariate: impl Into<String>, amount: f64, target: Outcome) -> Self {
        Perturbation {
            covariate: covariate.into(),
            mode: PerturbationMode::Percent,
            amount,
            target,
        }
    }

    pub fn sd(covariate: impl Into<String>, amount: f64, target: Outcome) -> Self {
        Perturbation {
            covariate: covariate.into(),
            mode: PerturbationMode::Sd,
            amount,
            target,
        }
    }

    pub fn apply(&self, x: f64, sd: f64) -> f64 {
        match self.mode {
            PerturbationMode::Percent => x * (1.0 - self.amount / 100.0),
            PerturbationMode::Sd => x - self.amount * sd,
        }
    }

    pub fn label(&self) -> String {
        match self.mode {
            PerturbationMode::Percent => format!("{}% decrease", self.amount),
            PerturbationMode::Sd => format!("{} SD decrease", self.amount),
        }
    }

    /// 10–50% decreases in steps of 10, then 1 and 2 SD decreases.
    pub fn paper_scheme(covariate: &str, target: Outcome) -> Vec<Perturbation> {
        let mut v: Vec<Perturbation> = (1..=5)
            .map(|k| Perturbation::percent(covariate, 10.0 * k as f64, target))
            .collect();
        v.push(Perturbation::sd(covariate, 1.0, target));
        v.push(Perturbation::sd(covariate, 2.0, target));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub label: String,
    pub perturbation: Option<Perturbation>,
    /// Outcome shares in percent, (baseline, near-crash, crash).
    pub shares_pct: [f64; 3],
    pub counts: [u64; 3],
    /// Percentage-point change against the no-change row.
    pub delta_shares_pct: [f64; 3],
    pub delta_counts: [i64; 3],
}

impl ScenarioResult {
    fn new(label: String, perturbation: Option<Perturbation>, shares: [f64; 3], base: [f64; 3], denominator: usize) -> Self {
        let pct = shares.map(|s| 100.0 * s);
        let base_pct = base.map(|s| 100.0 * s);
        let counts = shares.map(|s| round_half_even(s * denominator as f64));
        let base_counts = base.map(|s| round_half_even(s * denominator as f64));
        ScenarioResult {
            label,
            perturbation,
            shares_pct: pct,
            counts,
            delta_shares_pct: [pct[0] - base_pct[0], pct[1] - base_pct[1], pct[2] - base_pct[2]],
            delta_counts: [
                counts[0] as i64 - base_counts[0] as i64,
                counts[1] as i64 - base_counts[1] as i64,
                counts[2] as i64 - base_counts[2] as i64,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub denominator: usize,
    pub rows: Vec<ScenarioResult>,
}

impl ScenarioReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["scenario".to_string(), "covariate".to_string(), "target".to_string()];
        for o in Outcome::ALL {
            let o = o.as_str();
            header.extend([
                format!("{o}_share_pct"),
                format!("{o}_count"),
                format!("{o}_delta_share_pct"),
                format!("{o}_delta_count"),
            ]);
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let (cov, target) = r
                .perturbation
                .as_ref()
                .map_or((String::new(), String::new()), |p| (p.covariate.clone(), p.target.as_str().to_string()));
            let mut rec = vec![r.label.clone(), cov, target];
            for k in 0..3 {
                rec.extend([
                    r.shares_pct[k].to_string(),
                    r.counts[k].to_string(),
                    r.delta_shares_pct[k].to_string(),
                    r.delta_counts[k].to_string(),
                ]);
            }
            w.write_record(&rec)?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

/// Rounds to the nearest integer, ties to even.
pub fn round_half_even(x: f64) -> u64 {
    x.max(0.0).round_ties_even() as u64
}

pub fn marginal_effects(fit: &FitResult, data: &ChoiceDataset) -> Result<MarginalEffectTable> {
    Ok(Predictor::new(fit, data, false)?.marginal_effects())
}

pub fn probability_curve(fit: &FitResult, data: &ChoiceDataset, covariate: &str, grid: &[f64]) -> Result<ProbabilityCurve> {
    Predictor::new(fit, data, false)?.probability_curve(covariate, grid)
}

pub fn scenario_simulate(fit: &FitResult, data: &ChoiceDataset, perturbation: &Perturbation) -> Result<ScenarioResult> {
    let report = Predictor::new(fit, data, false)?.scenarios(std::slice::from_ref(perturbation), None)?;
    Ok(report.rows.into_iter().nth(1).expect("one scenario row"))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, CoefficientLayout, ModelClass, CONSTANT};
    use approx::assert_relative_eq;

    fn toy() -> (ModelSpec, ParameterSet, ChoiceDataset) {
        let layout = CoefficientLayout {
            crash: vec![Coefficient::fixed(CONSTANT), Coefficient::fixed("x"), Coefficient::fixed("flag")],
            near_crash: vec![Coefficient::fixed(CONSTANT), Coefficient::fixed("x")],
        };
        let spec = ModelSpec::new(ModelClass::Mnl, layout);
        let mut p = ParameterSet::zeros(&spec);
        p.beta_crash = vec![-1.0, 0.8, 0.5];
        p.beta_nearcrash = vec![-0.2, -0.3];
        let rows = [(0.5, 1.0, Outcome::Crash), (1.5, 0.0, Outcome::Baseline), (1.0, 1.0, Outcome::NearCrash)];
        let events = rows
            .iter()
            .enumerate()
            .map(|(i, &(x, f, o))| EventRecord {
                event_id: format!("e{i}"),
                observed: o,
                x_crash: vec![1.0, x, f],
                x_nearcrash: vec![1.0, x],
                z_scale: vec![],
            })
            .collect();
        let data = ChoiceDataset {
            crash_covariates: vec![CONSTANT.into(), "x".into(), "flag".into()],
            nearcrash_covariates: vec![CONSTANT.into(), "x".into()],
            scale_covariates: vec![],
            events,
        };
        (spec, p, data)
    }

    fn softmax(v: [f64; 3]) -> [f64; 3] {
        let e = v.map(f64::exp);
        let s = e.iter().sum::<f64>();
        e.map(|x| x / s)
    }

    fn hand_probs(p: &ParameterSet, x: f64, f: f64) -> [f64; 3] {
        softmax([
            0.0,
            p.beta_nearcrash[0] + p.beta_nearcrash[1] * x,
            p.beta_crash[0] + p.beta_crash[1] * x + p.beta_crash[2] * f,
        ])
    }

    #[test]
    fn continuous_effect_matches_logit_derivative() {
        let (spec, p, data) = toy();
        let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
        let me = pred.marginal_effect("x").unwrap();
        assert_eq!(me.kind, EffectKind::Continuous);
        // dP_k/dx = P_k (β_k - Σ_j P_j β_j) with β = (0, β_nc, β_c) for x
        let betas = [0.0, p.beta_nearcrash[1], p.beta_crash[1]];
        let mut want = [0.0; 3];
        for e in &data.events {
            let pr = hand_probs(&p, e.x_crash[1], e.x_crash[2]);
            let bar: f64 = (0..3).map(|j| pr[j] * betas[j]).sum();
            for k in 0..3 {
                want[k] += pr[k] * (betas[k] - bar) / 3.0;
            }
        }
        for k in 0..3 {
            assert_relative_eq!(me.effects[k], want[k], epsilon = 1e-6);
        }
        assert!(me.effects.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn binary_effect_is_discrete_change() {
        let (spec, p, data) = toy();
        let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
        let me = pred.marginal_effect("flag").unwrap();
        assert_eq!(me.kind, EffectKind::DiscreteChange);
        let mut want = [0.0; 3];
        for e in &data.events {
            let hi = hand_probs(&p, e.x_crash[1], 1.0);
            let lo = hand_probs(&p, e.x_crash[1], 0.0);
            for k in 0..3 {
                want[k] += (hi[k] - lo[k]) / 3.0;
            }
        }
        for k in 0..3 {
            assert_relative_eq!(me.effects[k], want[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn unused_attribute_has_zero_effect() {
        let (spec, mut p, data) = toy();
        p.beta_crash[2] = 0.0;
        let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
        assert_eq!(pred.marginal_effect("flag").unwrap().effects, [0.0; 3]);
        assert!(matches!(pred.marginal_effect("nope"), Err(Error::Layout(_))));
    }

    #[test]
    fn curve_shapes() {
        let (spec, p, data) = toy();
        let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
        let grid: Vec<f64> = (0..20).map(|k| k as f64 * 0.25).collect();
        let c = pred.probability_curve("x", &grid).unwrap();
        assert_eq!(c.points.len(), 20);
        let crash = c.series(Outcome::Crash);
        assert!(crash.windows(2).all(|w| w[1] >= w[0]));
        assert!(!c.warnings.is_empty());
        let rev: Vec<f64> = grid.iter().rev().copied().collect();
        let r = pred.probability_curve("x", &rev).unwrap();
        let mut back = r.series(Outcome::Crash);
        back.reverse();
        assert_eq!(back, crash);
        let flat = pred.probability_curve("x", &[1.0; 4]).unwrap();
        assert!(flat.points.windows(2).all(|w| w[0].probabilities == w[1].probabilities));
        assert_eq!(c.to_csv().unwrap().lines().count(), 1 + 60);
    }

    #[test]
    fn ten_percent_scenario_matches_hand_softmax() {
        let (spec, p, data) = toy();
        let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
        let shares = pred.perturbed_shares(&Perturbation::percent("x", 10.0, Outcome::Crash)).unwrap();
        let mut want = 0.0;
        let mut base = 0.0;
        for e in &data.events {
            let (x, f) = (e.x_crash[1], e.x_crash[2]);
            let v_nc = p.beta_nearcrash[0] + p.beta_nearcrash[1] * x;
            let pr = softmax([0.0, v_nc, p.beta_crash[0] + p.beta_crash[1] * 0.9 * x + p.beta_crash[2] * f]);
            want += pr[2] / 3.0;
            base += hand_probs(&p, x, f)[2] / 3.0;
        }
        assert_relative_eq!(shares[2], want, epsilon = 1e-12);
        assert!(shares[2] < base);
    }

    #[test]
    fn scenario_report_layout() {
        let (spec, p, data) = toy();
        let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
        let rep = pred.scenarios(&Perturbation::paper_scheme("x", Outcome::Crash), Some(2319)).unwrap();
        assert_eq!(rep.rows.len(), 8);
        assert_eq!(rep.rows[0].delta_counts, [0; 3]);
        assert_eq!(rep.rows[0].delta_shares_pct, [0.0; 3]);
        for r in &rep.rows {
            assert!((r.shares_pct.iter().sum::<f64>() - 100.0).abs() < 1e-8);
        }
        let zero = pred.scenarios(&[Perturbation::percent("x", 0.0, Outcome::Crash)], None).unwrap();
        assert_eq!(zero.rows[1].delta_shares_pct, [0.0; 3]);
        assert_eq!(zero.rows[1].delta_counts, [0; 3]);
        assert!(matches!(
            pred.perturbed_shares(&Perturbation::percent("flag", 10.0, Outcome::NearCrash)),
            Err(Error::InvalidScenario(_))
        ));
    }

    #[test]
    fn composed_percent_perturbations() {
        let (spec, p, mut data) = toy();
        let one = {
            let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
            pred.perturbed_shares(&Perturbation::percent("x", 100.0 * (1.0 - 0.9 * 0.8), Outcome::Crash))
                .unwrap()
        };
        for e in &mut data.events {
            e.x_crash[1] *= 0.9;
        }
        let pred = Predictor::from_parameters(&spec, &p, &data).unwrap();
        let two = pred.perturbed_shares(&Perturbation::percent("x", 20.0, Outcome::Crash)).unwrap();
        for k in 0..3 {
            assert_relative_eq!(one[k], two[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(round_half_even(148.5), 148);
        assert_eq!(round_half_even(149.5), 150);
        assert_eq!(round_half_even(0.06414 * 2319.0), 149);
    }
}
