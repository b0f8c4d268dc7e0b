use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcome::Outcome;

/// Reserved covariate name for an alternative-specific constant.
pub const CONSTANT: &str = "constant";

pub const DEFAULT_DRAWS: usize = 500;
pub const DEFAULT_HALTON_BURN: usize = 50;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;
pub const DEFAULT_GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    #[serde(rename = "MNL")]
    Mnl,
    #[serde(rename = "RP_MNL")]
    RpMnl,
    #[serde(rename = "S_MNL")]
    SMnl,
    #[serde(rename = "HS_MNL")]
    HsMnl,
    #[serde(rename = "GMNL_I")]
    GmnlI,
    #[serde(rename = "GMNL_II")]
    GmnlII,
    #[serde(rename = "H_GMNL")]
    HGmnl,
}

impl ModelClass {
    pub const ALL: [ModelClass; 7] = [
        ModelClass::Mnl,
        ModelClass::RpMnl,
        ModelClass::SMnl,
        ModelClass::HsMnl,
        ModelClass::GmnlI,
        ModelClass::GmnlII,
        ModelClass::HGmnl,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelClass::Mnl => "MNL",
            ModelClass::RpMnl => "RP_MNL",
            ModelClass::SMnl => "S_MNL",
            ModelClass::HsMnl => "HS_MNL",
            ModelClass::GmnlI => "GMNL_I",
            ModelClass::GmnlII => "GMNL_II",
            ModelClass::HGmnl => "H_GMNL",
        }
    }

    /// Random (normally mixed) coefficients allowed.
    pub fn mixes(self) -> bool {
        matches!(
            self,
            ModelClass::RpMnl | ModelClass::GmnlI | ModelClass::GmnlII | ModelClass::HGmnl
        )
    }

    /// Heterogeneous scale σ_i with dispersion τ.
    pub fn scales(self) -> bool {
        !matches!(self, ModelClass::Mnl | ModelClass::RpMnl)
    }

    /// Scale depends on observed covariates through θ.
    pub fn hierarchical(self) -> bool {
        matches!(self, ModelClass::HsMnl | ModelClass::HGmnl)
    }

    /// κ is a model parameter (free for H_GMNL, pinned for GMNL_I / GMNL_II).
    pub fn has_kappa(self) -> bool {
        matches!(self, ModelClass::GmnlI | ModelClass::GmnlII | ModelClass::HGmnl)
    }

    pub fn fixed_kappa(self) -> Option<f64> {
        match self {
            ModelClass::GmnlI => Some(1.0),
            ModelClass::GmnlII => Some(0.0),
            _ => None,
        }
    }

    pub fn estimates_kappa(self) -> bool {
        self == ModelClass::HGmnl
    }

    pub fn is_simulated(self) -> bool {
        self != ModelClass::Mnl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    #[default]
    Fixed,
    /// Normally distributed across events.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    #[serde(default)]
    pub kind: CoefficientKind,
}

impl Coefficient {
    pub fn fixed(name: impl Into<String>) -> Self {
        Coefficient {
            name: name.into(),
            kind: CoefficientKind::Fixed,
        }
    }

    pub fn normal(name: impl Into<String>) -> Self {
        Coefficient {
            name: name.into(),
            kind: CoefficientKind::Normal,
        }
    }

    pub fn is_random(&self) -> bool {
        self.kind == CoefficientKind::Normal
    }
}

/// Coefficients entering the crash and near-crash utilities. Each name is a
/// covariate column (or [`CONSTANT`]).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoefficientLayout {
    pub crash: Vec<Coefficient>,
    pub near_crash: Vec<Coefficient>,
}

/// A random coefficient's position in the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSlot {
    pub outcome: Outcome,
    pub index: usize,
}

impl CoefficientLayout {
    pub fn for_outcome(&self, outcome: Outcome) -> &[Coefficient] {
        match outcome {
            Outcome::Crash => &self.crash,
            Outcome::NearCrash => &self.near_crash,
            Outcome::Baseline => &[],
        }
    }

    /// Random coefficients in layout order: crash first, then near-crash.
    pub fn random_slots(&self) -> Vec<RandomSlot> {
        let mut out = Vec::new();
        for outcome in [Outcome::Crash, Outcome::NearCrash] {
            for (index, c) in self.for_outcome(outcome).iter().enumerate() {
                if c.is_random() {
                    out.push(RandomSlot { outcome, index });
                }
            }
        }
        out
    }

    pub fn n_random(&self) -> usize {
        self.crash.iter().chain(&self.near_crash).filter(|c| c.is_random()).count()
    }

    pub fn names(&self, outcome: Outcome) -> Vec<String> {
        self.for_outcome(outcome).iter().map(|c| c.name.clone()).collect()
    }

    /// Same layout with every coefficient fixed.
    pub fn all_fixed(&self) -> Self {
        let fix = |v: &[Coefficient]| v.iter().map(|c| Coefficient::fixed(c.name.clone())).collect();
        CoefficientLayout {
            crash: fix(&self.crash),
            near_crash: fix(&self.near_crash),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.crash.is_empty() && self.near_crash.is_empty() {
            return Err(Error::spec("layout has no coefficients"));
        }
        for outcome in [Outcome::Crash, Outcome::NearCrash] {
            let coefs = self.for_outcome(outcome);
            for (i, c) in coefs.iter().enumerate() {
                if c.name.trim().is_empty() {
                    return Err(Error::spec(format!("empty coefficient name in {outcome} utility")));
                }
                if coefs[..i].iter().any(|p| p.name == c.name) {
                    return Err(Error::spec(format!(
                        "coefficient `{}` repeated in {outcome} utility",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawScheme {
    #[default]
    Halton,
    PseudoRandom,
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}
fn default_burn() -> usize {
    DEFAULT_HALTON_BURN
}
fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}
fn default_tolerance() -> f64 {
    DEFAULT_GRADIENT_TOLERANCE
}

/// Model specification as read from / written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub class: ModelClass,
    pub layout: CoefficientLayout,
    #[serde(default)]
    pub scale_covariates: Vec<String>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub draw_scheme: DrawScheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn")]
    pub halton_burn: usize,
    /// Divide non-constant covariates by their sample SD while optimizing.
    #[serde(default)]
    pub standardize: bool,
    /// Number of optimizer starts; `None` uses 3 for GMNL classes, 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub gradient_tolerance: f64,
}

impl ModelSpec {
    pub fn new(class: ModelClass, layout: CoefficientLayout) -> Self {
        ModelSpec {
            class,
            layout,
            scale_covariates: Vec::new(),
            draws: DEFAULT_DRAWS,
            draw_scheme: DrawScheme::Halton,
            seed: 0,
            halton_burn: DEFAULT_HALTON_BURN,
            standardize: false,
            starts: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            gradient_tolerance: DEFAULT_GRADIENT_TOLERANCE,
        }
    }

    pub fn with_scale_covariates(mut self, names: &[&str]) -> Self {
        self.scale_covariates = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_draws(mut self, draws: usize) -> Self {
        self.draws = draws;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scheme(mut self, scheme: DrawScheme) -> Self {
        self.draw_scheme = scheme;
        self
    }

    /// MNL is evaluated in closed form and uses a single (unused) draw.
    pub fn effective_draws(&self) -> usize {
        if self.class == ModelClass::Mnl {
            1
        } else {
            self.draws
        }
    }

    pub fn n_random(&self) -> usize {
        self.layout.n_random()
    }

    pub fn n_starts(&self) -> usize {
        self.starts.unwrap_or(if self.class.has_kappa() { 3 } else { 1 }).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.draws == 0 {
            return Err(Error::spec("draw count must be at least 1"));
        }
        if self.n_random() > 0 && !self.class.mixes() {
            return Err(Error::spec(format!(
                "{} does not allow random coefficients",
                self.class.label()
            )));
        }
        if !self.scale_covariates.is_empty() && !self.class.hierarchical() {
            return Err(Error::spec(format!(
                "{} does not take scale covariates",
                self.class.label()
            )));
        }
        for (i, s) in self.scale_covariates.iter().enumerate() {
            if s == CONSTANT {
                return Err(Error::spec("the scale level is fixed; `constant` cannot be a scale covariate"));
            }
            if self.scale_covariates[..i].contains(s) {
                return Err(Error::spec(format!("scale covariate `{s}` repeated")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::spec("max_iterations must be at least 1"));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::spec("gradient_tolerance must be positive"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(random: bool) -> CoefficientLayout {
        CoefficientLayout {
            crash: vec![
                Coefficient::fixed(CONSTANT),
                if random { Coefficient::normal("x") } else { Coefficient::fixed("x") },
            ],
            near_crash: vec![Coefficient::fixed(CONSTANT)],
        }
    }

    #[test]
    fn class_restrictions() {
        assert!(ModelSpec::new(ModelClass::Mnl, layout(true)).validate().is_err());
        assert!(ModelSpec::new(ModelClass::SMnl, layout(true)).validate().is_err());
        assert!(ModelSpec::new(ModelClass::HsMnl, layout(true)).validate().is_err());
        assert!(ModelSpec::new(ModelClass::RpMnl, layout(true)).validate().is_ok());
        assert!(ModelSpec::new(ModelClass::SMnl, layout(false))
            .with_scale_covariates(&["z"])
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelClass::HGmnl, layout(true))
            .with_scale_covariates(&["z"])
            .validate()
            .is_ok());
        assert!(ModelSpec::new(ModelClass::RpMnl, layout(true)).with_draws(0).validate().is_err());
    }

    #[test]
    fn mnl_uses_one_draw() {
        let s = ModelSpec::new(ModelClass::Mnl, layout(false)).with_draws(300);
        assert_eq!(s.effective_draws(), 1);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut l = layout(false);
        l.crash.push(Coefficient::fixed("x"));
        assert!(ModelSpec::new(ModelClass::Mnl, l).validate().is_err());
    }

    #[test]
    fn json_defaults() {
        let s = ModelSpec::from_json(
            r#"{"class":"H_GMNL","layout":{"crash":[{"name":"constant"},{"name":"x","kind":"normal"}],"near_crash":[{"name":"constant"}]},"scale_covariates":["z"]}"#,
        )
        .unwrap();
        assert_eq!(s.draws, 500);
        assert_eq!(s.halton_burn, 50);
        assert_eq!(s.draw_scheme, DrawScheme::Halton);
        assert_eq!(s.n_random(), 1);
        assert_eq!(s.n_starts(), 3);
        let back: ModelSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn random_slots_order() {
        let l = CoefficientLayout {
            crash: vec![Coefficient::fixed("a"), Coefficient::normal("b")],
            near_crash: vec![Coefficient::normal("c"), Coefficient::fixed("d")],
        };
        let slots = l.random_slots();
        assert_eq!(slots[0], RandomSlot { outcome: Outcome::Crash, index: 1 });
        assert_eq!(slots[1], RandomSlot { outcome: Outcome::NearCrash, index: 0 });
    }
}
