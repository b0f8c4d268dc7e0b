use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::covariance::{covariances, diag_sqrt, to_rows, CovarianceSource};
use super::draws::DrawBlock;
use super::optimizer::{minimize, BfgsOptions, IterationRecord, Termination};
use super::simulate::Simulator;
use super::{information_criteria, null_loglik};
use crate::error::{Error, Result};
use crate::model::{
    parameter_names, ChoiceDataset, DrawScheme, ModelClass, ModelSpec, ParamGroup, ParamIndex, ParameterSet,
    CONSTANT,
};
use crate::outcome::Outcome;
use crate::repro::derive_seed;

/// Default starting values for ω and τ. Zero is a stationary point of the
/// simulated likelihood in those directions and the surface is flat near it,
/// so the defaults sit well inside the interior.
const OMEGA_START: f64 = 0.3;
const TAU_START: f64 = 0.5;
/// Supplied starts are lifted to at least this much heterogeneity.
const HETEROGENEITY_FLOOR: f64 = 0.05;
/// Mean log-likelihood above this means every event is predicted
/// (near-)perfectly.
const SEPARATION_MEAN_LOGLIK: f64 = -1e-4;

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Extra starting points (natural scale) tried after the default ones.
    pub extra_starts: Vec<ParameterSet>,
    /// Replace the default first start.
    pub start: Option<ParameterSet>,
    /// Skip covariance estimation.
    pub skip_covariance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub group: ParamGroup,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawConfig {
    pub count: usize,
    pub scheme: DrawScheme,
    pub seed: u64,
    pub halton_burn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: usize,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub tool_version: String,
    pub spec: ModelSpec,
    pub estimates: ParameterSet,
    pub parameters: Vec<ParameterEstimate>,
    pub se: Option<Vec<f64>>,
    pub vcov: Option<Vec<Vec<f64>>>,
    pub covariance_source: CovarianceSource,
    pub se_hessian: Option<Vec<f64>>,
    pub se_bhhh: Option<Vec<f64>>,
    pub se_robust: Option<Vec<f64>>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub n_params: usize,
    pub aic: f64,
    pub pseudo_r2: f64,
    pub n_events: usize,
    pub outcome_counts: [usize; 3],
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    /// Max-norm of the gradient of the mean negative log-likelihood.
    pub gradient_norm: f64,
    pub draws: DrawConfig,
    pub underflow_warnings: usize,
    pub warnings: Vec<String>,
    pub starts: Vec<StartSummary>,
    pub convergence_log: Vec<IterationRecord>,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Table-style text summary: coefficient, z-stat, fit statistics.
    pub fn summary(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "{} ({} events, {} draws)", self.spec.class.label(), self.n_events, self.draws.count);
        let _ = writeln!(s, "{:<40} {:>12} {:>10}", "Variable", "Beta", "z-stat");
        for p in &self.parameters {
            let z = p.z.map_or("---".to_string(), |z| format!("{z:.2}"));
            let _ = writeln!(s, "{:<40} {:>12.4} {:>10}", p.name, p.estimate, z);
        }
        let _ = writeln!(s, "{:<40} {:>12.3}", "Log-likelihood", self.loglik);
        let _ = writeln!(s, "{:<40} {:>12.3}", "Null log-likelihood", self.loglik_null);
        let _ = writeln!(s, "{:<40} {:>12.4}", "McFadden pseudo R2", self.pseudo_r2);
        let _ = writeln!(s, "{:<40} {:>12}", "Number of parameters", self.n_params);
        let _ = writeln!(s, "{:<40} {:>12}", "N", self.n_events);
        let _ = writeln!(s, "{:<40} {:>12.1}", "AIC", self.aic);
        if !self.converged {
            let _ = writeln!(s, "WARNING: optimizer did not converge ({:?})", self.termination);
        }
        s
    }
}

/// Rejects designs whose columns are linearly dependent within an outcome
/// utility, or scale covariates that are constant.
pub fn check_identification(data: &ChoiceDataset) -> Result<()> {
    for outcome in [Outcome::Crash, Outcome::NearCrash] {
        let names = data.names(outcome);
        let cols: Vec<Vec<f64>> = (0..names.len())
            .map(|j| data.events.iter().map(|e| e.covariates(outcome)[j]).collect())
            .collect();
        independent_columns(&cols, names, false)?;
    }
    let cols: Vec<Vec<f64>> = (0..data.scale_covariates.len())
        .map(|j| data.events.iter().map(|e| e.z_scale[j]).collect())
        .collect();
    independent_columns(&cols, &data.scale_covariates, true)
}

fn independent_columns(cols: &[Vec<f64>], names: &[String], with_level: bool) -> Result<()> {
    let n = cols.first().map_or(0, |c| c.len());
    let mut basis: Vec<Vec<f64>> = Vec::new();
    if with_level && n > 0 {
        basis.push(vec![1.0 / (n as f64).sqrt(); n]);
    }
    for (col, name) in cols.iter().zip(names) {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = col.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-8 * norm0 {
            return Err(Error::CollinearCovariate(name.clone()));
        }
        r.iter_mut().for_each(|x| *x /= norm);
        basis.push(r);
    }
    Ok(())
}

/// Per-parameter factors mapping the standardized problem back to original
/// covariate units (`natural = scaled * factor`).
fn standardize(spec: &ModelSpec, data: &ChoiceDataset) -> (ChoiceDataset, Vec<f64>) {
    let idx = ParamIndex::new(spec);
    let mut factors = vec![1.0; idx.len()];
    if !spec.standardize {
        return (data.clone(), factors);
    }
    let sd = |vals: Vec<f64>| -> f64 {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
        let s = v.sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let mut scaled = data.clone();
    let mut col_scale = |outcome: Option<Outcome>, j: usize, name: &str| -> f64 {
        if name == CONSTANT {
            return 1.0;
        }
        let s = match outcome {
            Some(o) => sd(data.events.iter().map(|e| e.covariates(o)[j]).collect()),
            None => sd(data.events.iter().map(|e| e.z_scale[j]).collect()),
        };
        for e in &mut scaled.events {
            match outcome {
                Some(o) => e.covariates_mut(o)[j] /= s,
                None => e.z_scale[j] /= s,
            }
        }
        s
    };
    let mut crash_s = Vec::new();
    for (j, c) in spec.layout.crash.iter().enumerate() {
        crash_s.push(col_scale(Some(Outcome::Crash), j, &c.name));
    }
    let mut near_s = Vec::new();
    for (j, c) in spec.layout.near_crash.iter().enumerate() {
        near_s.push(col_scale(Some(Outcome::NearCrash), j, &c.name));
    }
    let z_s: Vec<f64> = spec
        .scale_covariates
        .iter()
        .enumerate()
        .map(|(j, n)| col_scale(None, j, n))
        .collect();
    for (j, s) in crash_s.iter().enumerate() {
        factors[idx.beta_crash_offset() + j] = 1.0 / s;
    }
    for (j, s) in near_s.iter().enumerate() {
        factors[idx.beta_nearcrash_offset() + j] = 1.0 / s;
    }
    for (r, slot) in spec.layout.random_slots().iter().enumerate() {
        let s = if slot.outcome == Outcome::Crash { crash_s[slot.index] } else { near_s[slot.index] };
        factors[idx.omega_offset() + r] = 1.0 / s;
    }
    for (m, s) in z_s.iter().enumerate() {
        factors[idx.theta_offset() + m] = 1.0 / s;
    }
    (scaled, factors)
}

fn mnl_start(spec: &ModelSpec, data: &ChoiceDataset) -> Result<ParameterSet> {
    let mut mnl = ModelSpec::new(ModelClass::Mnl, spec.layout.all_fixed());
    mnl.max_iterations = spec.max_iterations;
    mnl.gradient_tolerance = spec.gradient_tolerance;
    let mut d = data.clone();
    d.scale_covariates.clear();
    d.events.iter_mut().for_each(|e| e.z_scale.clear());
    let draws = DrawBlock::for_spec(&mnl, d.len())?;
    let sim = Simulator::new(&mnl, &d, &draws)?;
    let idx = sim.index().clone();
    let n = d.len() as f64;
    let r = minimize(
        |x| {
            let (v, g) = sim.loglik_gradient(x);
            (-v.value / n, g.iter().map(|gi| -gi / n).collect())
        },
        &vec![0.0; idx.len()],
        &BfgsOptions {
            max_iterations: spec.max_iterations,
            gradient_tolerance: spec.gradient_tolerance,
            ..Default::default()
        },
        |_| {},
    );
    let mnl_params = idx.to_params(&r.x);
    let mut p = ParameterSet::zeros(spec);
    p.beta_crash = mnl_params.beta_crash;
    p.beta_nearcrash = mnl_params.beta_nearcrash;
    Ok(p)
}

fn with_heterogeneity_floor(mut p: ParameterSet, spec: &ModelSpec, floor: f64, start_omega: f64, start_tau: f64) -> ParameterSet {
    for w in &mut p.omega_sd {
        if *w < floor {
            *w = start_omega;
        }
    }
    if spec.class.scales() && p.tau < floor {
        p.tau = start_tau;
    }
    if spec.class.estimates_kappa() && p.kappa.is_none() {
        p.kappa = Some(0.5);
    }
    p
}

fn perturbed(base: &[f64], groups: &[ParamGroup], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    base.iter()
        .zip(groups)
        .map(|(&x, g)| {
            let e: f64 = rng.sample(StandardNormal);
            match g {
                ParamGroup::Beta | ParamGroup::Theta => x + 0.25 * e * (x.abs() + 0.1),
                ParamGroup::OmegaSd => rng.random_range(0.05..1.0),
                ParamGroup::Tau => rng.random_range(0.05f64..1.0).ln(),
                ParamGroup::Kappa => e,
            }
        })
        .collect()
}

pub fn fit(spec: &ModelSpec, data: &ChoiceDataset) -> Result<FitResult> {
    fit_with(spec, data, &FitOptions::default())
}

pub fn fit_with(spec: &ModelSpec, data: &ChoiceDataset, opts: &FitOptions) -> Result<FitResult> {
    spec.validate()?;
    data.check_against(spec)?;
    data.validate_for_estimation()?;
    check_identification(data)?;

    let idx = ParamIndex::new(spec);
    let (scaled, factors) = standardize(spec, data);
    let draws = DrawBlock::for_spec(spec, scaled.len())?;
    let sim = Simulator::new(spec, &scaled, &draws)?;
    let n = scaled.len() as f64;
    let groups = idx.groups();

    // natural-scale start → scaled free vector
    let to_scaled_free = |p: &ParameterSet| -> Vec<f64> {
        let mut nat = p.clone();
        let f = &factors;
        nat.beta_crash.iter_mut().enumerate().for_each(|(j, b)| *b /= f[idx.beta_crash_offset() + j]);
        nat.beta_nearcrash.iter_mut().enumerate().for_each(|(j, b)| *b /= f[idx.beta_nearcrash_offset() + j]);
        nat.omega_sd.iter_mut().enumerate().for_each(|(r, w)| *w /= f[idx.omega_offset() + r]);
        nat.theta.iter_mut().enumerate().for_each(|(m, t)| *t /= f[idx.theta_offset() + m]);
        idx.to_free(&nat)
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let base = match &opts.start {
        Some(p) => {
            p.conforms(spec)?;
            let f = HETEROGENEITY_FLOOR;
            with_heterogeneity_floor(p.clone(), spec, f, f, f)
        }
        None if spec.class == ModelClass::Mnl => ParameterSet::zeros(spec),
        None => with_heterogeneity_floor(mnl_start(spec, data)?, spec, HETEROGENEITY_FLOOR, OMEGA_START, TAU_START),
    };
    let base_free = to_scaled_free(&base);
    starts.push(base_free.clone());
    for k in 1..spec.n_starts() {
        starts.push(perturbed(&base_free, &groups, derive_seed(spec.seed, "multistart", k as u64)));
    }
    for p in &opts.extra_starts {
        p.conforms(spec)?;
        let f = HETEROGENEITY_FLOOR;
        starts.push(to_scaled_free(&with_heterogeneity_floor(p.clone(), spec, f, f, f)));
    }

    let bfgs = BfgsOptions {
        max_iterations: spec.max_iterations,
        gradient_tolerance: spec.gradient_tolerance,
        ..Default::default()
    };
    let mut best: Option<(usize, super::optimizer::BfgsResult)> = None;
    let mut summaries = Vec::new();
    for (s, x0) in starts.iter().enumerate() {
        let r = minimize(
            |x| {
                let (v, g) = sim.loglik_gradient(x);
                (-v.value / n, g.iter().map(|gi| -gi / n).collect())
            },
            x0,
            &bfgs,
            |rec| {
                log::info!(
                    "{} start {s} iter {:>4} loglik {:.6} |grad| {:.3e}",
                    spec.class.label(),
                    rec.iteration,
                    -rec.value * n,
                    rec.gradient_norm
                )
            },
        );
        summaries.push(StartSummary {
            start: s,
            loglik: -r.value * n,
            converged: r.converged(),
            iterations: r.iterations,
        });
        let better = match &best {
            None => true,
            Some((_, b)) => r.value.is_finite() && (r.value < b.value || !b.value.is_finite()),
        };
        if better {
            best = Some((s, r));
        }
    }
    let (best_start, opt) = best.expect("at least one start");
    let ll_eval = sim.loglik(&opt.x);
    let loglik = ll_eval.value;

    let mut warnings = Vec::new();
    if !opt.converged() {
        warnings.push(format!("optimizer stopped without convergence: {:?}", opt.termination));
    }
    if ll_eval.underflows > 0 {
        warnings.push(format!("{} events clamped at the probability floor", ll_eval.underflows));
    }
    if starts.len() > 1 {
        log::info!("best of {} starts: {best_start}", starts.len());
    }

    // covariance: scaled free → natural free-order units
    let scaled_params = idx.to_params(&opt.x);
    let jac = idx.jacobian_diag(&opt.x);
    let natural_factor: Vec<f64> = jac.iter().zip(&factors).map(|(j, f)| j * f).collect();
    let separated = loglik / n > SEPARATION_MEAN_LOGLIK;
    let cov = if opts.skip_covariance {
        None
    } else {
        let mut c = covariances(&sim, &opt.x);
        c.rescale(&natural_factor);
        if separated {
            warnings.push("outcomes are (quasi-)perfectly predicted; standard errors unavailable".into());
            c.source = CovarianceSource::Unavailable;
        }
        warnings.extend(c.notes.iter().cloned());
        Some(c)
    };

    let mut estimates = scaled_params;
    let f = &factors;
    estimates.beta_crash.iter_mut().enumerate().for_each(|(j, b)| *b *= f[idx.beta_crash_offset() + j]);
    estimates.beta_nearcrash.iter_mut().enumerate().for_each(|(j, b)| *b *= f[idx.beta_nearcrash_offset() + j]);
    estimates.omega_sd.iter_mut().enumerate().for_each(|(r, w)| *w *= f[idx.omega_offset() + r]);
    estimates.theta.iter_mut().enumerate().for_each(|(m, t)| *t *= f[idx.theta_offset() + m]);

    let values = idx.natural_values(&estimates);
    let se = cov.as_ref().and_then(|c| c.primary()).map(diag_sqrt);
    let names = parameter_names(spec);
    let parameters = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let s = se.as_ref().map(|v| v[i]);
            ParameterEstimate {
                name: name.clone(),
                group: groups[i],
                estimate: values[i],
                se: s,
                z: s.filter(|s| *s > 0.0).map(|s| values[i] / s),
            }
        })
        .collect();

    let counts = data.outcome_counts();
    let loglik_null = null_loglik(counts);
    let k = idx.len();
    let (aic, pseudo_r2) = information_criteria(loglik, loglik_null, k)?;

    Ok(FitResult {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        estimates,
        parameters,
        vcov: cov.as_ref().and_then(|c| c.primary()).map(to_rows),
        covariance_source: cov.as_ref().map_or(CovarianceSource::Unavailable, |c| c.source),
        se,
        se_hessian: cov.as_ref().and_then(|c| c.hessian.as_ref()).map(diag_sqrt),
        se_bhhh: cov.as_ref().and_then(|c| c.bhhh.as_ref()).map(diag_sqrt),
        se_robust: cov.as_ref().and_then(|c| c.robust.as_ref()).map(diag_sqrt),
        loglik,
        loglik_null,
        n_params: k,
        aic,
        pseudo_r2,
        n_events: data.len(),
        outcome_counts: counts,
        converged: opt.converged(),
        termination: opt.termination.clone(),
        iterations: opt.iterations,
        gradient_norm: opt.gradient_norm(),
        draws: DrawConfig {
            count: draws.draws(),
            scheme: spec.draw_scheme,
            seed: spec.seed,
            halton_burn: spec.halton_burn,
        },
        underflow_warnings: ll_eval.underflows,
        warnings,
        starts: summaries,
        convergence_log: opt.history,
    })
}
