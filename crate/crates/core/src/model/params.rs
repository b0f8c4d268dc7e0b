use serde::{Deserialize, Serialize};

use super::spec::{ModelClass, ModelSpec};
use crate::error::{Error, Result};
use crate::outcome::Outcome;

/// Structural parameters on their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub beta_crash: Vec<f64>,
    pub beta_nearcrash: Vec<f64>,
    /// Standard deviations of the random coefficients, in random-slot order.
    pub omega_sd: Vec<f64>,
    /// Scale covariate weights.
    pub theta: Vec<f64>,
    /// Dispersion of the unobserved scale term.
    pub tau: f64,
    /// Proportionality weight in [0, 1]; `None` for classes without it.
    pub kappa: Option<f64>,
}

impl ParameterSet {
    /// All-zero coefficients, no heterogeneity.
    pub fn zeros(spec: &ModelSpec) -> Self {
        ParameterSet {
            beta_crash: vec![0.0; spec.layout.crash.len()],
            beta_nearcrash: vec![0.0; spec.layout.near_crash.len()],
            omega_sd: vec![0.0; spec.n_random()],
            theta: vec![0.0; spec.scale_covariates.len()],
            tau: 0.0,
            kappa: if spec.class.has_kappa() {
                Some(spec.class.fixed_kappa().unwrap_or(0.5))
            } else {
                None
            },
        }
    }

    pub fn beta(&self, outcome: Outcome) -> &[f64] {
        match outcome {
            Outcome::Crash => &self.beta_crash,
            Outcome::NearCrash => &self.beta_nearcrash,
            Outcome::Baseline => &[],
        }
    }

    /// κ as used in coefficient blending. Classes without κ either have
    /// σ ≡ 1 or no random part, where any value gives the same result.
    pub fn kappa_or_default(&self) -> f64 {
        self.kappa.unwrap_or(1.0)
    }

    pub fn conforms(&self, spec: &ModelSpec) -> Result<()> {
        let expect = [
            ("beta_crash", self.beta_crash.len(), spec.layout.crash.len()),
            ("beta_nearcrash", self.beta_nearcrash.len(), spec.layout.near_crash.len()),
            ("omega_sd", self.omega_sd.len(), spec.n_random()),
            ("theta", self.theta.len(), spec.scale_covariates.len()),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::layout(format!("{name} has {got} entries, layout needs {want}")));
            }
        }
        if self.tau < 0.0 || !self.tau.is_finite() {
            return Err(Error::param(format!("tau {} must be finite and ≥ 0", self.tau)));
        }
        if self.omega_sd.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::param("omega_sd entries must be finite and ≥ 0"));
        }
        if let Some(k) = self.kappa {
            if !(0.0..=1.0).contains(&k) {
                return Err(Error::param(format!("kappa {k} outside [0, 1]")));
            }
        }
        let finite = self
            .beta_crash
            .iter()
            .chain(&self.beta_nearcrash)
            .chain(&self.theta)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("non-finite coefficient"));
        }
        Ok(())
    }
}

/// What a free-vector entry is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Beta,
    OmegaSd,
    Theta,
    Tau,
    Kappa,
}

/// Map between [`ParameterSet`] and the unconstrained vector the optimizer
/// works on: β and θ as-is, ω through |·|, τ through exp, κ through the
/// logistic function.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamIndex {
    pub n_crash: usize,
    pub n_nearcrash: usize,
    pub n_random: usize,
    pub n_theta: usize,
    pub has_tau: bool,
    pub free_kappa: bool,
    pub fixed_kappa: Option<f64>,
    pub has_kappa: bool,
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

const KAPPA_CLAMP: f64 = 1e-9;
const TAU_FLOOR: f64 = 1e-12;

impl ParamIndex {
    pub fn new(spec: &ModelSpec) -> Self {
        ParamIndex {
            n_crash: spec.layout.crash.len(),
            n_nearcrash: spec.layout.near_crash.len(),
            n_random: spec.n_random(),
            n_theta: spec.scale_covariates.len(),
            has_tau: spec.class.scales(),
            free_kappa: spec.class.estimates_kappa(),
            fixed_kappa: spec.class.fixed_kappa(),
            has_kappa: spec.class.has_kappa(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_crash
            + self.n_nearcrash
            + self.n_random
            + self.n_theta
            + usize::from(self.has_tau)
            + usize::from(self.free_kappa)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beta_crash_offset(&self) -> usize {
        0
    }
    pub fn beta_nearcrash_offset(&self) -> usize {
        self.n_crash
    }
    pub fn beta_offset(&self, outcome: Outcome) -> usize {
        match outcome {
            Outcome::Crash => self.beta_crash_offset(),
            _ => self.beta_nearcrash_offset(),
        }
    }
    pub fn omega_offset(&self) -> usize {
        self.n_crash + self.n_nearcrash
    }
    pub fn theta_offset(&self) -> usize {
        self.omega_offset() + self.n_random
    }
    pub fn tau_index(&self) -> Option<usize> {
        self.has_tau.then(|| self.theta_offset() + self.n_theta)
    }
    pub fn kappa_index(&self) -> Option<usize> {
        self.free_kappa
            .then(|| self.theta_offset() + self.n_theta + usize::from(self.has_tau))
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut g = vec![ParamGroup::Beta; self.n_crash + self.n_nearcrash];
        g.extend(std::iter::repeat_n(ParamGroup::OmegaSd, self.n_random));
        g.extend(std::iter::repeat_n(ParamGroup::Theta, self.n_theta));
        if self.has_tau {
            g.push(ParamGroup::Tau);
        }
        if self.free_kappa {
            g.push(ParamGroup::Kappa);
        }
        g
    }

    pub fn to_params(&self, free: &[f64]) -> ParameterSet {
        debug_assert_eq!(free.len(), self.len());
        let om = self.omega_offset();
        let th = self.theta_offset();
        ParameterSet {
            beta_crash: free[..self.n_crash].to_vec(),
            beta_nearcrash: free[self.n_crash..om].to_vec(),
            omega_sd: free[om..th].iter().map(|w| w.abs()).collect(),
            theta: free[th..th + self.n_theta].to_vec(),
            tau: self.tau_index().map_or(0.0, |i| free[i].exp()),
            kappa: if let Some(i) = self.kappa_index() {
                Some(logistic(free[i]))
            } else if self.has_kappa {
                self.fixed_kappa
            } else {
                None
            },
        }
    }

    /// Inverse of [`Self::to_params`]. τ = 0 and κ ∈ {0, 1} are pulled to the
    /// nearest representable interior value.
    pub fn to_free(&self, p: &ParameterSet) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&p.beta_crash);
        v.extend_from_slice(&p.beta_nearcrash);
        v.extend_from_slice(&p.omega_sd);
        v.extend_from_slice(&p.theta);
        if self.has_tau {
            v.push(p.tau.max(TAU_FLOOR).ln());
        }
        if self.free_kappa {
            let k = p.kappa.unwrap_or(0.5).clamp(KAPPA_CLAMP, 1.0 - KAPPA_CLAMP);
            v.push(logit(k));
        }
        v
    }

    /// d(natural)/d(free) for each entry.
    pub fn jacobian_diag(&self, free: &[f64]) -> Vec<f64> {
        let mut j = vec![1.0; self.len()];
        let om = self.omega_offset();
        for i in om..om + self.n_random {
            j[i] = if free[i] < 0.0 { -1.0 } else { 1.0 };
        }
        if let Some(i) = self.tau_index() {
            j[i] = free[i].exp();
        }
        if let Some(i) = self.kappa_index() {
            let k = logistic(free[i]);
            j[i] = k * (1.0 - k);
        }
        j
    }

    /// Natural-scale values in free-vector order.
    pub fn natural_values(&self, p: &ParameterSet) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&p.beta_crash);
        v.extend_from_slice(&p.beta_nearcrash);
        v.extend_from_slice(&p.omega_sd);
        v.extend_from_slice(&p.theta);
        if self.has_tau {
            v.push(p.tau);
        }
        if self.free_kappa {
            v.push(p.kappa.unwrap_or(0.5));
        }
        v
    }
}

/// Human-readable names for each free parameter.
pub fn parameter_names(spec: &ModelSpec) -> Vec<String> {
    let mut names = Vec::new();
    for c in &spec.layout.crash {
        names.push(format!("crash:{}", c.name));
    }
    for c in &spec.layout.near_crash {
        names.push(format!("near_crash:{}", c.name));
    }
    for slot in spec.layout.random_slots() {
        let c = &spec.layout.for_outcome(slot.outcome)[slot.index];
        let prefix = if slot.outcome == Outcome::Crash { "crash" } else { "near_crash" };
        names.push(format!("sd:{prefix}:{}", c.name));
    }
    for z in &spec.scale_covariates {
        names.push(format!("scale:{z}"));
    }
    if spec.class.scales() {
        names.push("tau".into());
    }
    if spec.class == ModelClass::HGmnl {
        names.push("kappa".into());
    }
    names
}
