//! Simulated choice probabilities, log-likelihood and analytic scores.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::draws::{DrawBlock, EventDraws};
use crate::error::{Error, Result};
use crate::model::{
    choice_probabilities, dot, scale_factor_unchecked, ChoiceDataset, EventRecord, ModelClass, ModelSpec,
    ParamIndex, ParameterSet, RandomSlot,
};
use crate::outcome::Outcome;
use crate::repro::{ordered_sum, ordered_sum_with_vec};

/// Simulated probabilities below this are clamped before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

/// Mean over draws of the logit probabilities for one event.
pub fn simulated_probability(
    spec: &ModelSpec,
    params: &ParameterSet,
    event: &EventRecord,
    draws: EventDraws<'_>,
) -> Result<[f64; 3]> {
    params.conforms(spec)?;
    if draws.dims() != spec.n_random() + 1 {
        return Err(Error::param(format!(
            "draw block has {} columns, model needs {}",
            draws.dims(),
            spec.n_random() + 1
        )));
    }
    if draws.is_empty() {
        return Err(Error::param("no draws"));
    }
    if event.x_crash.len() != params.beta_crash.len()
        || event.x_nearcrash.len() != params.beta_nearcrash.len()
        || event.z_scale.len() != params.theta.len()
    {
        return Err(Error::layout(format!("event {} does not match the layout", event.event_id)));
    }
    let slots = spec.layout.random_slots();
    Ok(event_probabilities(spec.class, params, &slots, event, draws))
}

#[derive(Debug, Clone, Copy)]
struct EventTerms {
    bx_crash: f64,
    bx_nearcrash: f64,
    theta_z: f64,
}

fn terms(params: &ParameterSet, e: &EventRecord) -> EventTerms {
    EventTerms {
        bx_crash: dot(&params.beta_crash, &e.x_crash),
        bx_nearcrash: dot(&params.beta_nearcrash, &e.x_nearcrash),
        theta_z: dot(&params.theta, &e.z_scale),
    }
}

#[inline]
fn random_sums(params: &ParameterSet, slots: &[RandomSlot], e: &EventRecord, row: &[f64]) -> (f64, f64) {
    let mut wc = 0.0;
    let mut wn = 0.0;
    for (r, slot) in slots.iter().enumerate() {
        let w = params.omega_sd[r] * row[r];
        match slot.outcome {
            Outcome::Crash => wc += w * e.x_crash[slot.index],
            _ => wn += w * e.x_nearcrash[slot.index],
        }
    }
    (wc, wn)
}

pub(crate) fn event_probabilities(
    class: ModelClass,
    params: &ParameterSet,
    slots: &[RandomSlot],
    e: &EventRecord,
    draws: EventDraws<'_>,
) -> [f64; 3] {
    let t = terms(params, e);
    let kappa = params.kappa_or_default();
    let eps_col = draws.dims() - 1;
    let scales = class.scales();
    let mut acc = [0.0; 3];
    for row in draws.rows() {
        let sigma = if scales {
            scale_factor_unchecked(t.theta_z, params.tau, row[eps_col])
        } else {
            1.0
        };
        let mix = kappa + (1.0 - kappa) * sigma;
        let (wc, wn) = random_sums(params, slots, e, row);
        let p = choice_probabilities([0.0, sigma * t.bx_nearcrash + mix * wn, sigma * t.bx_crash + mix * wc]);
        acc[0] += p[0];
        acc[1] += p[1];
        acc[2] += p[2];
    }
    let d = draws.len() as f64;
    [acc[0] / d, acc[1] / d, acc[2] / d]
}

/// Likelihood machinery bound to one dataset and draw block.
#[derive(Debug)]
pub struct Simulator<'a> {
    spec: &'a ModelSpec,
    data: &'a ChoiceDataset,
    draws: &'a DrawBlock,
    index: ParamIndex,
    slots: Vec<RandomSlot>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikValue {
    pub value: f64,
    pub underflows: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a ModelSpec, data: &'a ChoiceDataset, draws: &'a DrawBlock) -> Result<Self> {
        data.check_against(spec)?;
        data.validate()?;
        if draws.n_events() != data.len() {
            return Err(Error::param(format!(
                "draw block covers {} events, dataset has {}",
                draws.n_events(),
                data.len()
            )));
        }
        if draws.n_random() != spec.n_random() {
            return Err(Error::param(format!(
                "draw block has {} random dimensions, model needs {}",
                draws.n_random(),
                spec.n_random()
            )));
        }
        Ok(Simulator {
            spec,
            data,
            draws,
            index: ParamIndex::new(spec),
            slots: spec.layout.random_slots(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }
    pub fn data(&self) -> &ChoiceDataset {
        self.data
    }
    pub fn index(&self) -> &ParamIndex {
        &self.index
    }
    pub fn n_params(&self) -> usize {
        self.index.len()
    }

    pub fn event_probabilities(&self, params: &ParameterSet, i: usize) -> [f64; 3] {
        event_probabilities(self.spec.class, params, &self.slots, &self.data.events[i], self.draws.event(i))
    }

    /// Probabilities for a (possibly modified) record using event `i`'s draws.
    pub fn probabilities_for(&self, params: &ParameterSet, record: &EventRecord, i: usize) -> [f64; 3] {
        event_probabilities(self.spec.class, params, &self.slots, record, self.draws.event(i))
    }

    fn event_loglik(&self, params: &ParameterSet, i: usize, underflows: &AtomicUsize) -> f64 {
        let e = &self.data.events[i];
        let p = self.event_probabilities(params, i)[e.observed.index()];
        if p <= PROBABILITY_FLOOR {
            underflows.fetch_add(1, Ordering::Relaxed);
            PROBABILITY_FLOOR.ln()
        } else {
            p.ln()
        }
    }

    pub fn loglik_params(&self, params: &ParameterSet) -> LoglikValue {
        let underflows = AtomicUsize::new(0);
        let value = ordered_sum(self.data.len(), |i| self.event_loglik(params, i, &underflows));
        LoglikValue {
            value,
            underflows: underflows.into_inner(),
        }
    }

    pub fn loglik(&self, free: &[f64]) -> LoglikValue {
        self.loglik_params(&self.index.to_params(free))
    }

    /// Log-likelihood and its gradient with respect to the free vector.
    pub fn loglik_gradient(&self, free: &[f64]) -> (LoglikValue, Vec<f64>) {
        let params = self.index.to_params(free);
        let jac = self.index.jacobian_diag(free);
        let underflows = AtomicUsize::new(0);
        let (value, grad) = ordered_sum_with_vec(self.data.len(), self.index.len(), |i, g| {
            self.event_score(&params, &jac, i, g, &underflows)
        });
        (
            LoglikValue {
                value,
                underflows: underflows.into_inner(),
            },
            grad,
        )
    }

    /// Per-event scores (rows) at `free`.
    pub fn scores(&self, free: &[f64]) -> Vec<Vec<f64>> {
        let params = self.index.to_params(free);
        let jac = self.index.jacobian_diag(free);
        let underflows = AtomicUsize::new(0);
        use rayon::prelude::*;
        (0..self.data.len())
            .into_par_iter()
            .map(|i| {
                let mut g = vec![0.0; self.index.len()];
                self.event_score(&params, &jac, i, &mut g, &underflows);
                g
            })
            .collect()
    }

    /// Central finite-difference gradient of the simulated log-likelihood.
    pub fn numerical_gradient(&self, free: &[f64], rel_step: f64) -> Vec<f64> {
        let mut x = free.to_vec();
        (0..free.len())
            .map(|j| {
                let h = rel_step * free[j].abs().max(1.0);
                x[j] = free[j] + h;
                let up = self.loglik(&x).value;
                x[j] = free[j] - h;
                let down = self.loglik(&x).value;
                x[j] = free[j];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// Adds event `i`'s score into `g`; returns its log-likelihood term.
    fn event_score(
        &self,
        params: &ParameterSet,
        jac: &[f64],
        i: usize,
        g: &mut [f64],
        underflows: &AtomicUsize,
    ) -> f64 {
        let e = &self.data.events[i];
        let draws = self.draws.event(i);
        let idx = &self.index;
        let t = terms(params, e);
        let kappa = params.kappa_or_default();
        let tau = params.tau;
        let eps_col = draws.dims() - 1;
        let scales = self.spec.class.scales();
        let y = e.observed.index();
        let n_random = self.slots.len();

        let mut p_sum = 0.0;
        // Σ_d a_c σ and Σ_d a_nc σ (β scores before multiplying by x)
        let mut s_crash = 0.0;
        let mut s_near = 0.0;
        let mut omega_acc = [0.0f64; 16];
        let mut omega_heap;
        let omega_acc: &mut [f64] = if n_random <= 16 {
            &mut omega_acc[..n_random]
        } else {
            omega_heap = vec![0.0; n_random];
            &mut omega_heap
        };
        let mut theta_acc = 0.0;
        let mut tau_acc = 0.0;
        let mut kappa_acc = 0.0;

        for row in draws.rows() {
            let sigma = if scales {
                scale_factor_unchecked(t.theta_z, tau, row[eps_col])
            } else {
                1.0
            };
            let mix = kappa + (1.0 - kappa) * sigma;
            let (wc, wn) = random_sums(params, &self.slots, e, row);
            let p = choice_probabilities([0.0, sigma * t.bx_nearcrash + mix * wn, sigma * t.bx_crash + mix * wc]);
            let py = p[y];
            p_sum += py;
            let a_near = py * (f64::from(u8::from(y == 1)) - p[1]);
            let a_crash = py * (f64::from(u8::from(y == 2)) - p[2]);
            s_crash += a_crash * sigma;
            s_near += a_near * sigma;
            for (r, slot) in self.slots.iter().enumerate() {
                let a = if slot.outcome == Outcome::Crash { a_crash } else { a_near };
                omega_acc[r] += a * mix * row[r];
            }
            if scales {
                let d_sigma = a_near * (t.bx_nearcrash + (1.0 - kappa) * wn) + a_crash * (t.bx_crash + (1.0 - kappa) * wc);
                theta_acc += d_sigma * sigma;
                tau_acc += d_sigma * sigma * (row[eps_col] - tau);
                kappa_acc += (a_near * wn + a_crash * wc) * (1.0 - sigma);
            }
        }

        let d = draws.len() as f64;
        let prob = p_sum / d;
        if prob <= PROBABILITY_FLOOR {
            underflows.fetch_add(1, Ordering::Relaxed);
            return PROBABILITY_FLOOR.ln();
        }
        let norm = 1.0 / p_sum;
        let off_c = idx.beta_crash_offset();
        for (k, x) in e.x_crash.iter().enumerate() {
            g[off_c + k] += x * s_crash * norm;
        }
        let off_n = idx.beta_nearcrash_offset();
        for (k, x) in e.x_nearcrash.iter().enumerate() {
            g[off_n + k] += x * s_near * norm;
        }
        let off_w = idx.omega_offset();
        for (r, slot) in self.slots.iter().enumerate() {
            let x = e.covariates(slot.outcome)[slot.index];
            g[off_w + r] += x * omega_acc[r] * norm * jac[off_w + r];
        }
        if scales {
            let off_t = idx.theta_offset();
            for (m, z) in e.z_scale.iter().enumerate() {
                g[off_t + m] += z * theta_acc * norm;
            }
            if let Some(ti) = idx.tau_index() {
                g[ti] += tau_acc * norm * jac[ti];
            }
            if let Some(ki) = idx.kappa_index() {
                g[ki] += kappa_acc * norm * jac[ki];
            }
        }
        prob.ln()
    }
}

/// Σ over events of ln(simulated probability of the observed outcome).
pub fn log_likelihood(spec: &ModelSpec, params: &ParameterSet, data: &ChoiceDataset, draws: &DrawBlock) -> Result<f64> {
    params.conforms(spec)?;
    let sim = Simulator::new(spec, data, draws)?;
    let v = sim.loglik_params(params);
    if v.underflows > 0 {
        log::warn!("{} events hit the probability floor", v.underflows);
    }
    Ok(v.value)
}
