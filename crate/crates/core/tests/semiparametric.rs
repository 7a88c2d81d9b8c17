//! Integration checks of the mixture-cure EM against its own generators.

use mstu_core::cure::fit_logistic_cox;
use mstu_core::inference::PermutationPlan;
use mstu_core::inference_sp::permutation_inference_sp;
use mstu_core::resampling::derive_rng;
use mstu_core::sim::{sample_group, sample_setting, setting, SettingId};
use mstu_core::EmConfig;

#[test]
fn em_recovers_generator_coefficients() {
    // group 1 of the first semiparametric setting at a large sample size
    let spec = setting::<f64>(SettingId::II1);
    let mut rng = derive_rng(2024, &[0]);
    let sample = sample_group(&spec.group1, 2000, "g1", &mut rng);
    let fit = fit_logistic_cox(&sample, &EmConfig::default()).unwrap();
    assert!(fit.converged);

    let gamma_true = [0.0, 0.5, 0.8];
    let beta_true = [0.3, 0.5];
    for (est, truth) in fit.gamma.iter().zip(gamma_true) {
        assert!(
            (est - truth).abs() < 0.15,
            "gamma estimate {est} too far from {truth} (gamma = {:?})",
            fit.gamma
        );
    }
    for (est, truth) in fit.beta.iter().zip(beta_true) {
        assert!(
            (est - truth).abs() < 0.15,
            "beta estimate {est} too far from {truth} (beta = {:?})",
            fit.beta
        );
    }
}

#[test]
fn extreme_covariates_amplify_bootstrap_sigma() {
    // coefficient error blows up in the conditional survival at covariate
    // values far from the data, so the bootstrap spread must grow with |z|
    let spec = setting::<f64>(SettingId::II1);
    let mut rng = derive_rng(31, &[0]);
    let ds = sample_setting(&spec, 200, 100, &mut rng);
    let em = EmConfig::default();
    let central = mstu_core::inference_sp::bootstrap_sigma_z(&ds, &[0.0, 0.0], 40, 9, &em, 2)
        .unwrap()
        .sigma_z;
    let extreme = mstu_core::inference_sp::bootstrap_sigma_z(&ds, &[-4.0, 0.0], 40, 9, &em, 2)
        .unwrap()
        .sigma_z;
    assert!(
        extreme > central,
        "sigma at extreme z ({extreme}) not larger than at central z ({central})"
    );
}

#[test]
fn permuted_fits_converge_under_misspecification() {
    // exchangeable semiparametric setting: the permuted groups still follow
    // the model, and nearly all replicate fits must converge
    let spec = setting::<f64>(SettingId::II3);
    let mut rng = derive_rng(11, &[0]);
    let ds = sample_setting(&spec, 200, 100, &mut rng);
    let plan = PermutationPlan::Random { b: 60, seed: 5 };
    let (_, inf) = permutation_inference_sp(
        &ds,
        &[0.0, 1.0],
        0.05,
        &plan,
        30,
        &EmConfig::default(),
        4,
        0.0,
    )
    .unwrap();
    let attempts = inf.n_replicates_used + inf.n_replicates_discarded;
    assert!(
        inf.n_replicates_discarded * 20 <= attempts,
        "{} of {} permutation replicates failed",
        inf.n_replicates_discarded,
        attempts
    );
}
