//! Inference on the covariate-conditional difference of mean survival times
//! of the uncured: bootstrap variance, normal-approximation intervals, and
//! studentized permutation tests with a nested bootstrap.

use serde_json::json;

use crate::cure::{fit_logistic_cox, EmConfig, LogisticCoxFit};
use crate::data::{SurvivalSample, TwoSampleDataset};
use crate::error::{Error, Result};
use crate::inference::{
    summarize_permutation, InferenceResult, Method, PermutationDistribution, PermutationPlan,
};
use crate::mst::{rate_factor, TwoSampleMst};
use crate::normal;
use crate::real::Real;
use crate::resampling::{
    bootstrap_sample, derive_rng, derive_seed, permute_split, ReplicateStream, Scheme, STREAM_BOOT,
};

/// Conditional comparison summary at one covariate value.
#[derive(Debug, Clone)]
pub struct ConditionalMstResult<F> {
    pub z: Vec<F>,
    /// Estimated difference of conditional mean survival times.
    pub m_z: F,
    /// Bootstrap estimate of the standard deviation of `a_n * m_z`.
    pub sigma_z: F,
    pub rate_factor: F,
    pub t_stat: F,
    pub bootstrap_b: usize,
    /// Bootstrap replicates discarded because a refit failed or did not
    /// converge.
    pub fit_failures: usize,
}

impl<F: Real> ConditionalMstResult<F> {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "z": self.z.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            "m_z": self.m_z.to_f64_lossy(),
            "sigma_z": self.sigma_z.to_f64_lossy(),
            "t_stat": self.t_stat.to_f64_lossy(),
            "b_boot": self.bootstrap_b,
            "fit_failures": self.fit_failures,
        })
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Fit both groups, requiring convergence.
pub fn fit_both<F: Real>(
    ds: &TwoSampleDataset<F>,
    config: &EmConfig<F>,
) -> Result<(LogisticCoxFit<F>, LogisticCoxFit<F>)> {
    let f1 = fit_logistic_cox(&ds.sample1, config)?;
    let f2 = fit_logistic_cox(&ds.sample2, config)?;
    for (fit, sample) in [(&f1, &ds.sample1), (&f2, &ds.sample2)] {
        if !fit.converged {
            return Err(Error::NonConvergence(format!(
                "EM did not converge on sample '{}'",
                sample.label
            )));
        }
    }
    Ok((f1, f2))
}

/// `m_z`: conditional MST difference between the two fitted models.
pub fn conditional_mst_diff<F: Real>(
    f1: &LogisticCoxFit<F>,
    f2: &LogisticCoxFit<F>,
    z: &[F],
) -> Result<F> {
    Ok(f1.conditional_mst(z)? - f2.conditional_mst(z)?)
}

fn resample_group<F: Real>(sample: &SurvivalSample<F>, master: u64, index: usize) -> SurvivalSample<F> {
    // per-group substream keyed by the group label, so exchanging the two
    // samples exchanges the resamples and the difference exactly negates
    let mut rng = derive_rng(master, &[index as u64, fnv1a(&sample.label)]);
    bootstrap_sample(sample, &mut rng)
}

/// One stratified bootstrap refit, evaluated at several covariate values;
/// fails when either refit fails or does not converge.
fn bootstrap_diff_multi<F: Real>(
    ds: &TwoSampleDataset<F>,
    zs: &[Vec<F>],
    config: &EmConfig<F>,
    master: u64,
    index: usize,
) -> Result<Vec<F>> {
    let boot = TwoSampleDataset::new(
        resample_group(&ds.sample1, master, index),
        resample_group(&ds.sample2, master, index),
    )?;
    let (f1, f2) = fit_both(&boot, config)?;
    zs.iter().map(|z| conditional_mst_diff(&f1, &f2, z)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapSigma<F> {
    pub sigma_z: F,
    pub used: usize,
    pub failures: usize,
}

fn bootstrap_sigma_multi_with_master<F: Real>(
    ds: &TwoSampleDataset<F>,
    zs: &[Vec<F>],
    b: usize,
    master: u64,
    config: &EmConfig<F>,
    workers: usize,
) -> Result<Vec<BootstrapSigma<F>>> {
    if b < 2 {
        return Err(Error::Resampling("bootstrap needs at least 2 replicates".into()));
    }
    let stream = ReplicateStream::new(master, b, Scheme::BootstrapStratified);
    let results = crate::resampling::run_replicates(&stream, workers, |r, _| {
        bootstrap_diff_multi(ds, zs, config, master, r)
    });
    let mut draws: Vec<Vec<F>> = vec![Vec::with_capacity(b); zs.len()];
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(vs) => {
                for (per_z, v) in draws.iter_mut().zip(vs) {
                    per_z.push(v);
                }
            }
            Err(_) => failures += 1,
        }
    }
    let used = b - failures;
    if failures * 5 > b || used < 2 {
        return Err(Error::Resampling(format!(
            "bootstrap unreliable: {failures} of {b} replicate fits failed"
        )));
    }
    let an = rate_factor::<F>(ds.n1(), ds.n2());
    Ok(draws
        .into_iter()
        .map(|per_z| {
            let nf = F::from_count(per_z.len());
            let mean = per_z.iter().copied().sum::<F>() / nf;
            let ss = per_z.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>();
            BootstrapSigma { sigma_z: an * (ss / (nf - F::one())).sqrt(), used, failures }
        })
        .collect())
}

fn bootstrap_sigma_with_master<F: Real>(
    ds: &TwoSampleDataset<F>,
    z: &[F],
    b: usize,
    master: u64,
    config: &EmConfig<F>,
    workers: usize,
) -> Result<BootstrapSigma<F>> {
    Ok(bootstrap_sigma_multi_with_master(ds, &[z.to_vec()], b, master, config, workers)?[0])
}

/// Bootstrap estimate of the standard deviation of `a_n * m_z`, from `b`
/// stratified resamples of the original data.
pub fn bootstrap_sigma_z<F: Real>(
    ds: &TwoSampleDataset<F>,
    z: &[F],
    b: usize,
    seed: u64,
    config: &EmConfig<F>,
    workers: usize,
) -> Result<BootstrapSigma<F>> {
    bootstrap_sigma_with_master(ds, z, b, derive_seed(seed, &[STREAM_BOOT]), config, workers)
}

fn conditional_result<F: Real>(
    ds: &TwoSampleDataset<F>,
    z: &[F],
    m_z: F,
    sigma: &BootstrapSigma<F>,
) -> Result<ConditionalMstResult<F>> {
    if !(sigma.sigma_z > F::zero()) {
        return Err(Error::Degenerate("bootstrap variance of m_z is zero".into()));
    }
    let an = rate_factor::<F>(ds.n1(), ds.n2());
    Ok(ConditionalMstResult {
        z: z.to_vec(),
        m_z,
        sigma_z: sigma.sigma_z,
        rate_factor: an,
        t_stat: an * m_z / sigma.sigma_z,
        bootstrap_b: sigma.used,
        fit_failures: sigma.failures,
    })
}

fn normal_inference<F: Real>(
    res: &ConditionalMstResult<F>,
    alpha: F,
    null_value: F,
    seed: u64,
) -> InferenceResult<F> {
    let half = alpha / F::from_f64_lossy(2.0);
    let q = normal::quantile(F::one() - half);
    let margin = q * res.sigma_z / res.rate_factor;
    let t0 = res.rate_factor * (res.m_z - null_value) / res.sigma_z;
    InferenceResult {
        method: Method::Asymptotic,
        estimate: res.m_z,
        ci_lower: res.m_z - margin,
        ci_upper: res.m_z + margin,
        p_two_sided: crate::inference::clamp_p(normal::p_two_sided(t0)),
        p_greater: crate::inference::clamp_p(F::one() - normal::cdf(t0)),
        p_less: crate::inference::clamp_p(normal::cdf(t0)),
        alpha,
        null_value,
        n_replicates_used: res.bootstrap_b,
        n_replicates_discarded: res.fit_failures,
        seed: Some(seed),
        notes: Vec::new(),
    }
}

/// Normal-approximation intervals and tests for the conditional difference at
/// several covariate values, sharing the fits and bootstrap refits.
pub fn compare_conditional_mst_multi<F: Real>(
    ds: &TwoSampleDataset<F>,
    zs: &[Vec<F>],
    alpha: F,
    b_boot: usize,
    seed: u64,
    config: &EmConfig<F>,
    workers: usize,
    null_value: F,
) -> Result<Vec<(ConditionalMstResult<F>, InferenceResult<F>)>> {
    let (f1, f2) = fit_both(ds, config)?;
    let sigmas = bootstrap_sigma_multi_with_master(
        ds,
        zs,
        b_boot,
        derive_seed(seed, &[STREAM_BOOT]),
        config,
        workers,
    )?;
    zs.iter()
        .zip(sigmas)
        .map(|(z, sigma)| {
            let m_z = conditional_mst_diff(&f1, &f2, z)?;
            let res = conditional_result(ds, z, m_z, &sigma)?;
            let inf = normal_inference(&res, alpha, null_value, seed);
            Ok((res, inf))
        })
        .collect()
}

/// Normal-approximation interval and test for `m_z` with the bootstrap
/// standard deviation.
pub fn compare_conditional_mst<F: Real>(
    ds: &TwoSampleDataset<F>,
    z: &[F],
    alpha: F,
    b_boot: usize,
    seed: u64,
    config: &EmConfig<F>,
    workers: usize,
    null_value: F,
) -> Result<(ConditionalMstResult<F>, InferenceResult<F>)> {
    let mut v =
        compare_conditional_mst_multi(ds, &[z.to_vec()], alpha, b_boot, seed, config, workers, null_value)?;
    Ok(v.remove(0))
}

/// Bootstrap standard errors of the fitted coefficients of one group
/// (gamma first, then beta), from `b` resamples of that sample alone.
pub fn bootstrap_coef_se<F: Real>(
    sample: &SurvivalSample<F>,
    b: usize,
    seed: u64,
    config: &EmConfig<F>,
    workers: usize,
) -> Result<(Vec<F>, Vec<F>, usize)> {
    if b < 2 {
        return Err(Error::Resampling("bootstrap needs at least 2 replicates".into()));
    }
    let master = derive_seed(seed, &[STREAM_BOOT, fnv1a(&sample.label)]);
    let stream = ReplicateStream::new(master, b, Scheme::BootstrapStratified);
    let results = crate::resampling::run_replicates(&stream, workers, |r, _| {
        let boot = resample_group(sample, master, r);
        let fit = fit_logistic_cox(&boot, config)?;
        if !fit.converged {
            return Err(Error::NonConvergence("bootstrap refit did not converge".into()));
        }
        Ok((fit.gamma, fit.beta))
    });
    let mut gammas: Vec<Vec<F>> = Vec::new();
    let mut betas: Vec<Vec<F>> = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok((g, bv)) => {
                gammas.push(g);
                betas.push(bv);
            }
            Err(_) => failures += 1,
        }
    }
    if failures * 5 > b || gammas.len() < 2 {
        return Err(Error::Resampling(format!(
            "bootstrap unreliable: {failures} of {b} replicate fits failed"
        )));
    }
    let sd_per_coord = |draws: &[Vec<F>]| -> Vec<F> {
        let dim = draws[0].len();
        let nf = F::from_count(draws.len());
        (0..dim)
            .map(|i| {
                let mean = draws.iter().map(|d| d[i]).sum::<F>() / nf;
                let ss = draws.iter().map(|d| (d[i] - mean) * (d[i] - mean)).sum::<F>();
                (ss / (nf - F::one())).sqrt()
            })
            .collect()
    };
    Ok((sd_per_coord(&gammas), sd_per_coord(&betas), failures))
}

/// Studentized permutation inference for `m_z`: each permutation replicate
/// refits both models on a random split of the pooled records and
/// studentizes with its own nested bootstrap.
pub fn permutation_inference_sp<F: Real>(
    ds: &TwoSampleDataset<F>,
    z: &[F],
    alpha: F,
    plan: &PermutationPlan,
    b_boot: usize,
    config: &EmConfig<F>,
    workers: usize,
    null_value: F,
) -> Result<(ConditionalMstResult<F>, InferenceResult<F>)> {
    let (f1, f2) = fit_both(ds, config)?;
    let m_z = conditional_mst_diff(&f1, &f2, z)?;
    let pooled = ds.pooled_records();
    let n1 = ds.n1();

    let (seed, b, identity_only) = match *plan {
        PermutationPlan::Random { b, seed } => (seed, b, false),
        PermutationPlan::IdentityOnly { b, seed } => (seed, b, true),
        PermutationPlan::Exhaustive { .. } => {
            return Err(Error::Resampling(
                "exhaustive enumeration is not supported with a nested bootstrap".into(),
            ));
        }
    };
    let obs_boot_master = derive_seed(seed, &[STREAM_BOOT]);
    let sigma = bootstrap_sigma_with_master(ds, z, b_boot, obs_boot_master, config, workers)?;
    let res = conditional_result(ds, z, m_z, &sigma)?;

    // the nested bootstrap is serial inside each replicate; parallelism is
    // across permutation replicates
    let replicate = |r: usize, mut rng: rand_chacha::ChaCha8Rng| -> Result<F> {
        let perm_ds = if identity_only {
            // the identity permutation reproduces the original dataset
            ds.clone()
        } else {
            let split = permute_split(&pooled, n1, &mut rng)?;
            TwoSampleDataset::new(split.group1, split.group2)?
        };
        let (g1, g2) = fit_both(&perm_ds, config)?;
        let m_pi = conditional_mst_diff(&g1, &g2, z)?;
        // under the identity hook the nested stream collapses to the
        // observed-data bootstrap, making the statistic reproduce exactly
        let boot_master = if identity_only {
            obs_boot_master
        } else {
            derive_seed(seed, &[r as u64, STREAM_BOOT])
        };
        let sigma_pi = bootstrap_sigma_with_master(&perm_ds, z, b_boot, boot_master, config, 1)?;
        if !(sigma_pi.sigma_z > F::zero()) {
            return Err(Error::Degenerate("zero nested bootstrap variance".into()));
        }
        Ok(m_pi / sigma_pi.sigma_z)
    };
    let (t_values, discarded) =
        crate::inference::draw_with_redraws(derive_seed(seed, &[crate::resampling::STREAM_PERM]), b, workers, replicate)?;
    let dist = PermutationDistribution::new(t_values, false, discarded);

    let observed = TwoSampleMst {
        diff: m_z,
        sigma: res.sigma_z,
        rate_factor: res.rate_factor,
        t_stat: res.t_stat,
        n1,
        n2: pooled.len() - n1,
    };
    let mut inf = summarize_permutation(&observed, &dist, alpha, null_value, plan);
    inf.seed = Some(seed);
    Ok((res, inf))
}
