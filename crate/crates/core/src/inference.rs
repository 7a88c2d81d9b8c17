//! Confidence intervals and hypothesis tests for the difference of mean
//! survival times of the uncured: normal-approximation and studentized
//! permutation constructions, plus the cure-fraction comparison test.

use serde_json::json;

use crate::data::TwoSampleDataset;
use crate::error::{Error, Result};
use crate::km::{fit_km, KmFit};
use crate::mst::{two_sample_estimate, TwoSampleMst};
use crate::normal;
use crate::real::Real;
use crate::resampling::{
    permute_split, split_by_selection, split_count, Combinations, ReplicateStream, Scheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Asymptotic,
    Permutation,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Asymptotic => "asymptotic",
            Method::Permutation => "permutation",
        }
    }
}

/// Outcome of one inference procedure.
#[derive(Debug, Clone)]
pub struct InferenceResult<F> {
    pub method: Method,
    pub estimate: F,
    pub ci_lower: F,
    pub ci_upper: F,
    pub p_two_sided: F,
    pub p_greater: F,
    pub p_less: F,
    pub alpha: F,
    pub null_value: F,
    /// Replicates entering the permutation distribution (0 for asymptotic).
    pub n_replicates_used: usize,
    pub n_replicates_discarded: usize,
    pub seed: Option<u64>,
    /// Free-form notes, e.g. approximation caveats.
    pub notes: Vec<String>,
}

impl<F: Real> InferenceResult<F> {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "method": self.method.as_str(),
            "estimate": self.estimate.to_f64_lossy(),
            "ci": [self.ci_lower.to_f64_lossy(), self.ci_upper.to_f64_lossy()],
            "p_two_sided": self.p_two_sided.to_f64_lossy(),
            "p_greater": self.p_greater.to_f64_lossy(),
            "p_less": self.p_less.to_f64_lossy(),
            "alpha": self.alpha.to_f64_lossy(),
            "null_value": self.null_value.to_f64_lossy(),
            "b": self.n_replicates_used,
            "discarded": self.n_replicates_discarded,
            "seed": self.seed,
            "notes": self.notes,
        })
    }
}

/// Keep p-values in (0, 1] even when the normal tail underflows.
pub(crate) fn clamp_p<F: Real>(p: F) -> F {
    p.max(F::min_positive_value())
}

/// How permutation replicates are drawn.
#[derive(Debug, Clone, Copy)]
pub enum PermutationPlan {
    /// `b` random permutations from the given master seed.
    Random { b: usize, seed: u64 },
    /// All distinct group splits, refused above the cap.
    Exhaustive { cap: u64 },
    /// Test hook: every replicate is the identity permutation.
    IdentityOnly { b: usize, seed: u64 },
}

/// Normal-approximation interval and tests for the difference, at the given
/// null value.
pub fn asymptotic_inference<F: Real>(
    res: &TwoSampleMst<F>,
    alpha: F,
    null_value: F,
) -> Result<InferenceResult<F>> {
    if !(res.sigma > F::zero()) {
        return Err(Error::Degenerate("sigma = 0: cannot studentize".into()));
    }
    let half = alpha / F::from_f64_lossy(2.0);
    let q = normal::quantile(F::one() - half);
    let margin = q * res.sigma / res.rate_factor;
    let t0 = res.rate_factor * (res.diff - null_value) / res.sigma;
    Ok(InferenceResult {
        method: Method::Asymptotic,
        estimate: res.diff,
        ci_lower: res.diff - margin,
        ci_upper: res.diff + margin,
        p_two_sided: clamp_p(normal::p_two_sided(t0)),
        p_greater: clamp_p(F::one() - normal::cdf(t0)),
        p_less: clamp_p(normal::cdf(t0)),
        alpha,
        null_value,
        n_replicates_used: 0,
        n_replicates_discarded: 0,
        seed: None,
        notes: Vec::new(),
    })
}

/// Collected studentized permutation statistics.
pub struct PermutationDistribution<F> {
    /// Sorted statistics.
    pub(crate) t_values: Vec<F>,
    /// Raw proportions (exhaustive) instead of add-one smoothing (random).
    pub(crate) exact: bool,
    pub(crate) discarded: usize,
}

impl<F: Real> PermutationDistribution<F> {
    pub fn new(mut t_values: Vec<F>, exact: bool, discarded: usize) -> Self {
        t_values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
        PermutationDistribution { t_values, exact, discarded }
    }

    /// The sorted studentized statistics.
    pub fn statistics(&self) -> &[F] {
        &self.t_values
    }

    /// Type-1 empirical quantile: order statistic at index `ceil(b q)`.
    pub fn quantile(&self, q: F) -> F {
        let b = self.t_values.len();
        let idx = (F::from_count(b) * q).ceil().to_f64_lossy() as usize;
        self.t_values[idx.clamp(1, b) - 1]
    }

    fn smooth(&self, count: usize) -> F {
        let b = self.t_values.len();
        if self.exact {
            F::from_count(count) / F::from_count(b)
        } else {
            F::from_count(count + 1) / F::from_count(b + 1)
        }
    }

    pub fn p_two_sided(&self, t_obs: F) -> F {
        let c = self.t_values.iter().filter(|t| t.abs() >= t_obs.abs()).count();
        self.smooth(c)
    }

    pub fn p_greater(&self, t_obs: F) -> F {
        let c = self.t_values.iter().filter(|&&t| t >= t_obs).count();
        self.smooth(c)
    }

    pub fn p_less(&self, t_obs: F) -> F {
        let c = self.t_values.iter().filter(|&&t| t <= t_obs).count();
        self.smooth(c)
    }
}

/// Draw replicates with deterministic redraws on failure; errors once the
/// discard rate exceeds 20%.
pub(crate) fn draw_with_redraws<T, J>(
    seed: u64,
    b: usize,
    workers: usize,
    job: J,
) -> Result<(Vec<T>, usize)>
where
    T: Send,
    J: Fn(usize, rand_chacha::ChaCha8Rng) -> Result<T> + Sync,
{
    if b == 0 {
        return Err(Error::Resampling("at least one replicate required".into()));
    }
    let stream = ReplicateStream::new(seed, b, Scheme::Permutation);
    let discard_cap = b / 4;
    let mut outputs = Vec::with_capacity(b);
    let mut discarded = 0usize;
    let mut next = 0usize;
    while outputs.len() < b {
        if discarded > discard_cap {
            return Err(Error::Resampling(format!(
                "permutation distribution unreliable: {discarded} of {next} replicates discarded"
            )));
        }
        let need = b - outputs.len();
        let batch = crate::resampling::run_indexed(&stream, next..next + need, workers, &job);
        next += need;
        for res in batch {
            match res {
                Ok(v) => outputs.push(v),
                Err(_) => discarded += 1,
            }
        }
    }
    Ok((outputs, discarded))
}

/// Studentized statistic of one permuted split.
fn permuted_statistic<F: Real>(split: &crate::resampling::PermutedSplit<F>) -> Result<F> {
    let f1 = fit_km(&split.group1)?;
    let f2 = fit_km(&split.group2)?;
    let res = two_sample_estimate(&f1, &f2)?;
    Ok(res.diff / res.sigma)
}

/// The full studentized permutation distribution over all distinct group
/// splits (used for finitely exact tests under exchangeability).
pub fn exhaustive_distribution<F: Real>(
    ds: &TwoSampleDataset<F>,
    cap: u64,
    workers: usize,
) -> Result<PermutationDistribution<F>> {
    permutation_distribution(ds, &PermutationPlan::Exhaustive { cap }, workers)
}

pub(crate) fn permutation_distribution<F: Real>(
    ds: &TwoSampleDataset<F>,
    plan: &PermutationPlan,
    workers: usize,
) -> Result<PermutationDistribution<F>> {
    let pooled = ds.pooled_records();
    let n1 = ds.n1();
    match *plan {
        PermutationPlan::Random { b, seed } => {
            let (ts, discarded) = draw_with_redraws(seed, b, workers, |_, mut rng| {
                let split = permute_split(&pooled, n1, &mut rng)?;
                permuted_statistic(&split)
            })?;
            Ok(PermutationDistribution::new(ts, false, discarded))
        }
        PermutationPlan::IdentityOnly { b, seed: _ } => {
            let split = crate::resampling::identity_split(&pooled, n1);
            let t = permuted_statistic(&split)?;
            Ok(PermutationDistribution::new(vec![t; b.max(1)], false, 0))
        }
        PermutationPlan::Exhaustive { cap } => {
            let n = pooled.len();
            let count = split_count(n, n1)
                .ok_or_else(|| Error::Resampling(format!("C({n},{n1}) overflows")))?;
            if count > cap {
                return Err(Error::Resampling(format!(
                    "C({n},{n1}) = {count} exceeds the exhaustive cap {cap}"
                )));
            }
            let selections: Vec<Vec<usize>> = Combinations::new(n, n1).collect();
            let stream = ReplicateStream::new(0, selections.len(), Scheme::Permutation);
            let results = crate::resampling::run_indexed(
                &stream,
                0..selections.len(),
                workers,
                &|r, _| {
                    let split = split_by_selection(&pooled, &selections[r]);
                    permuted_statistic(&split)
                },
            );
            let mut ts = Vec::with_capacity(results.len());
            let mut discarded = 0usize;
            for r in results {
                match r {
                    Ok(t) => ts.push(t),
                    Err(_) => discarded += 1,
                }
            }
            if ts.is_empty() || discarded * 5 > ts.len() + discarded {
                return Err(Error::Resampling(format!(
                    "permutation distribution unreliable: {discarded} of {} splits degenerate",
                    ts.len() + discarded
                )));
            }
            Ok(PermutationDistribution::new(ts, true, discarded))
        }
    }
}

/// Studentized permutation interval and tests for the difference.
pub fn permutation_inference<F: Real>(
    ds: &TwoSampleDataset<F>,
    alpha: F,
    plan: &PermutationPlan,
    null_value: F,
    workers: usize,
) -> Result<InferenceResult<F>> {
    ds.sample1.require_events()?;
    ds.sample2.require_events()?;
    let f1 = fit_km(&ds.sample1)?;
    let f2 = fit_km(&ds.sample2)?;
    let observed = two_sample_estimate(&f1, &f2)?;
    let dist = permutation_distribution(ds, plan, workers)?;
    Ok(summarize_permutation(&observed, &dist, alpha, null_value, plan))
}

pub(crate) fn summarize_permutation<F: Real>(
    observed: &TwoSampleMst<F>,
    dist: &PermutationDistribution<F>,
    alpha: F,
    null_value: F,
    plan: &PermutationPlan,
) -> InferenceResult<F> {
    let half = alpha / F::from_f64_lossy(2.0);
    let q_hi = dist.quantile(F::one() - half);
    let q_lo = dist.quantile(half);
    let t_obs = (observed.diff - null_value) / observed.sigma;
    let seed = match *plan {
        PermutationPlan::Random { seed, .. } | PermutationPlan::IdentityOnly { seed, .. } => {
            Some(seed)
        }
        PermutationPlan::Exhaustive { .. } => None,
    };
    InferenceResult {
        method: Method::Permutation,
        estimate: observed.diff,
        ci_lower: observed.diff - q_hi * observed.sigma,
        ci_upper: observed.diff - q_lo * observed.sigma,
        p_two_sided: dist.p_two_sided(t_obs),
        p_greater: dist.p_greater(t_obs),
        p_less: dist.p_less(t_obs),
        alpha,
        null_value,
        n_replicates_used: dist.t_values.len(),
        n_replicates_discarded: dist.discarded,
        seed,
        notes: Vec::new(),
    }
}

/// Wald comparison of the two cure fractions from the product-limit
/// asymptotics (`Var S(t) ~ S(t)^2 v(t) / n`). An approximation of the
/// classical nonparametric cure-rate test, flagged as such in the output.
pub fn cure_fraction_test<F: Real>(
    f1: &KmFit<F>,
    f2: &KmFit<F>,
    alpha: F,
) -> Result<InferenceResult<F>> {
    let var = |f: &KmFit<F>| {
        f.cure_fraction * f.cure_fraction * f.var_process_at_end() / F::from_count(f.n)
    };
    let v = var(f1) + var(f2);
    if !(v > F::zero()) {
        return Err(Error::Degenerate("both cure-fraction variances are zero".into()));
    }
    let se = v.sqrt();
    let diff = f1.cure_fraction - f2.cure_fraction;
    let stat = diff / se;
    let q = normal::quantile(F::one() - alpha / F::from_f64_lossy(2.0));
    Ok(InferenceResult {
        method: Method::Asymptotic,
        estimate: diff,
        ci_lower: diff - q * se,
        ci_upper: diff + q * se,
        p_two_sided: normal::p_two_sided(stat),
        p_greater: F::one() - normal::cdf(stat),
        p_less: normal::cdf(stat),
        alpha,
        null_value: F::zero(),
        n_replicates_used: 0,
        n_replicates_discarded: 0,
        seed: None,
        notes: vec!["Wald approximation from product-limit asymptotics".into()],
    })
}
