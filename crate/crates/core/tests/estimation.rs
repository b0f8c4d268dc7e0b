use approx::assert_abs_diff_eq;

use volatix::estimation::{fit, log_likelihood, null_loglik, CovarianceSource, DrawBlock};
use volatix::io::read_attributes;
use volatix::model::{
    ChoiceDataset, Coefficient, CoefficientLayout, ModelClass, ModelSpec, ParameterSet, CONSTANT,
};
use volatix::synthetic::{generate, CovariateDistribution, CovariateSpec, GeneratorConfig};
use volatix::Error;

fn layout(crash: &[&str], near: &[&str]) -> CoefficientLayout {
    let mk = |v: &[&str]| v.iter().map(|n| Coefficient::fixed(*n)).collect();
    CoefficientLayout {
        crash: mk(crash),
        near_crash: mk(near),
    }
}

fn dataset(csv: &str, spec: &ModelSpec) -> ChoiceDataset {
    let table = read_attributes(csv.as_bytes(), None).unwrap();
    ChoiceDataset::from_table(&table, spec).unwrap()
}

fn synthetic(spec: &ModelSpec, truth: ParameterSet, n: usize, seed: u64) -> ChoiceDataset {
    generate(&GeneratorConfig {
        spec: spec.clone(),
        truth,
        n_events: n,
        covariates: vec![CovariateSpec::new("x", CovariateDistribution::Normal { mean: 2.0, sd: 3.0 })],
        seed,
    })
    .unwrap()
    .dataset
}

#[test]
fn constants_only_fit_matches_sample_shares() {
    // Closed form: beta_j = ln(n_j / n_baseline); LL equals the null LL.
    let spec = ModelSpec::new(ModelClass::Mnl, layout(&[CONSTANT], &[CONSTANT]));
    let csv = "event_id,outcome\na,baseline\nb,baseline\nc,near_crash\nd,crash\ne,baseline\nf,near_crash\n";
    let data = dataset(csv, &spec);
    let r = fit(&spec, &data).unwrap();
    assert!(r.converged);
    // The optimizer stops on a gradient tolerance, so six events pin the
    // estimates down to roughly 1e-4.
    assert_abs_diff_eq!(r.estimates.beta_crash[0], (1.0f64 / 3.0).ln(), epsilon = 2e-4);
    assert_abs_diff_eq!(r.estimates.beta_nearcrash[0], (2.0f64 / 3.0).ln(), epsilon = 2e-4);
    assert_abs_diff_eq!(r.loglik, null_loglik([3, 2, 1]), epsilon = 1e-7);
    assert_abs_diff_eq!(r.pseudo_r2, 0.0, epsilon = 1e-9);
}

#[test]
fn four_event_grid_oracle() {
    let spec = ModelSpec::new(ModelClass::Mnl, layout(&["x"], &[]));
    let csv = "event_id,outcome,x\na,crash,1.0\nb,baseline,0.5\nc,near_crash,-1.0\nd,crash,-0.5\n";
    let data = dataset(csv, &spec);
    let draws = DrawBlock::for_spec(&spec, data.len()).unwrap();
    let ll = |b: f64| {
        let mut p = ParameterSet::zeros(&spec);
        p.beta_crash = vec![b];
        log_likelihood(&spec, &p, &data, &draws).unwrap()
    };
    let (mut best_b, mut best) = (0.0, f64::NEG_INFINITY);
    for k in -4000..=4000 {
        let b = k as f64 * 1e-3;
        if ll(b) > best {
            best = ll(b);
            best_b = b;
        }
    }
    let r = fit(&spec, &data).unwrap();
    assert!((r.estimates.beta_crash[0] - best_b).abs() < 2e-3, "{} vs {best_b}", r.estimates.beta_crash[0]);
    assert!(r.loglik >= best - 1e-9);
}

#[test]
fn constant_covariate_is_collinear() {
    let spec = ModelSpec::new(ModelClass::Mnl, layout(&[CONSTANT, "x"], &[CONSTANT]));
    let csv = "event_id,outcome,x\na,baseline,1\nb,crash,1\nc,near_crash,1\nd,baseline,1\n";
    let data = dataset(csv, &spec);
    match fit(&spec, &data) {
        Err(Error::CollinearCovariate(name)) => assert!(name.contains('x'), "{name}"),
        other => panic!("expected CollinearCovariate, got {other:?}"),
    }
}

#[test]
fn separated_data_has_no_standard_errors() {
    // Each outcome sits in its own region of (x, z), so the likelihood
    // increases without bound along (beta_x, beta_z) -> infinity.
    let spec = ModelSpec::new(ModelClass::Mnl, layout(&["x"], &["z"]));
    let mut csv = String::from("event_id,outcome,x,z\n");
    for i in 0..45 {
        let a = 0.1 + i as f64 * 0.05;
        let (outcome, x, z) = match i % 3 {
            0 => ("crash", a, 0.0),
            1 => ("near_crash", 0.0, a),
            _ => ("baseline", -a, -a),
        };
        csv.push_str(&format!("e{i},{outcome},{x},{z}\n"));
    }
    let data = dataset(&csv, &spec);
    let r = fit(&spec, &data).unwrap();
    assert_eq!(r.covariance_source, CovarianceSource::Unavailable);
    assert!(r.se.is_none());
    assert!(r.estimates.beta_crash[0] > 5.0);
    assert!(!r.warnings.is_empty());
}

#[test]
fn hessian_and_bhhh_agree_on_large_mnl() {
    let spec = ModelSpec::new(ModelClass::Mnl, layout(&[CONSTANT, "x"], &[CONSTANT, "x"]));
    let mut truth = ParameterSet::zeros(&spec);
    truth.beta_crash = vec![-1.5, 0.4];
    truth.beta_nearcrash = vec![-0.5, -0.2];
    let data = synthetic(&spec, truth, 20_000, 17);
    let r = fit(&spec, &data).unwrap();
    assert_eq!(r.covariance_source, CovarianceSource::Hessian);
    let h = r.se_hessian.as_ref().unwrap();
    let b = r.se_bhhh.as_ref().unwrap();
    for (h, b) in h.iter().zip(b) {
        assert!(((h - b) / h).abs() < 0.10, "hessian {h} vs bhhh {b}");
    }
}

#[test]
fn standardization_leaves_the_fit_unchanged() {
    let plain = ModelSpec::new(ModelClass::Mnl, layout(&[CONSTANT, "x"], &[CONSTANT]));
    let mut truth = ParameterSet::zeros(&plain);
    truth.beta_crash = vec![-2.0, 0.3];
    truth.beta_nearcrash = vec![-0.7];
    let data = synthetic(&plain, truth, 3_000, 23);
    let mut scaled = plain.clone();
    scaled.standardize = true;
    let a = fit(&plain, &data).unwrap();
    let b = fit(&scaled, &data).unwrap();
    assert_abs_diff_eq!(a.loglik, b.loglik, epsilon = 1e-6);
    for (x, y) in a.parameters.iter().zip(&b.parameters) {
        assert_abs_diff_eq!(x.estimate, y.estimate, epsilon = 1e-4);
        assert_abs_diff_eq!(x.se.unwrap(), y.se.unwrap(), epsilon = 1e-4);
    }
}

#[test]
fn generalized_model_reduces_to_mnl() {
    let mut l = layout(&[CONSTANT], &[CONSTANT]);
    l.crash.push(Coefficient::normal("x"));
    let h = ModelSpec::new(ModelClass::HGmnl, l.clone()).with_scale_covariates(&["x"]).with_draws(50);
    let mnl = ModelSpec::new(ModelClass::Mnl, l.all_fixed());
    let mut truth = ParameterSet::zeros(&mnl);
    truth.beta_crash = vec![-1.0, 0.5];
    truth.beta_nearcrash = vec![-0.3];
    let data = synthetic(&mnl, truth.clone(), 500, 31);
    let mut data_h = data.clone();
    data_h.scale_covariates = vec!["x".into()];
    for e in &mut data_h.events {
        e.z_scale = vec![e.covariates(volatix::Outcome::Crash)[1]];
    }
    let mut p = ParameterSet::zeros(&h);
    p.beta_crash.clone_from(&truth.beta_crash);
    p.beta_nearcrash.clone_from(&truth.beta_nearcrash);
    p.kappa = Some(0.5);
    let ll_h = log_likelihood(&h, &p, &data_h, &DrawBlock::for_spec(&h, data_h.len()).unwrap()).unwrap();
    let ll_m = log_likelihood(&mnl, &truth, &data, &DrawBlock::for_spec(&mnl, data.len()).unwrap()).unwrap();
    assert_abs_diff_eq!(ll_h, ll_m, epsilon = 1e-10);
}
