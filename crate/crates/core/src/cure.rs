//! Maximum-likelihood fitting of the logistic-Cox mixture cure model via EM
//! with the zero-tail constraint, plus conditional survival and conditional
//! mean survival time of the uncured.
//!
//! Incidence: probability of being uncured is `sigmoid(gamma' x)` with an
//! intercept prepended to `x`. Latency: survival of the uncured is
//! `exp(-Lambda(t) exp(beta' z))` with a nonparametric baseline `Lambda`
//! carried on the event-time grid and forced to "all mass used up" beyond
//! the last event (so censored observations in the plateau are classified
//! as cured).

use serde_json::json;

use crate::data::SurvivalSample;
use crate::error::{Error, Result};
use crate::real::Real;

/// EM and inner-solver controls.
#[derive(Debug, Clone, Copy)]
pub struct EmConfig<F> {
    /// Convergence tolerance on the max absolute change of all parameters
    /// (coefficients and baseline steps).
    pub tol: F,
    pub max_iter: usize,
    /// Newton tolerance for the inner maximizations.
    pub inner_tol: F,
    pub max_inner: usize,
}

impl<F: Real> Default for EmConfig<F> {
    fn default() -> Self {
        EmConfig {
            tol: F::from_f64_lossy(1e-7),
            max_iter: 500,
            inner_tol: F::from_f64_lossy(1e-10),
            max_inner: 50,
        }
    }
}

/// Step-function cumulative hazard on the event-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline<F> {
    /// Distinct event times, strictly increasing.
    pub times: Vec<F>,
    /// Cumulative hazard at each time (right-continuous).
    pub cum_hazard: Vec<F>,
}

impl<F: Real> Baseline<F> {
    /// Right-continuous evaluation; 0 before the first event time and
    /// constant after the last.
    pub fn eval(&self, t: F) -> F {
        match self.step_index(t) {
            None => F::zero(),
            Some(i) => self.cum_hazard[i],
        }
    }

    /// Hazard increment at exactly `t`, if `t` is a step time.
    pub fn increment_at(&self, t: F) -> Option<F> {
        let i = self.times.iter().position(|&u| u == t)?;
        let prev = if i == 0 { F::zero() } else { self.cum_hazard[i - 1] };
        Some(self.cum_hazard[i] - prev)
    }

    pub fn last_time(&self) -> F {
        *self.times.last().expect("baseline has at least one step")
    }

    fn step_index(&self, t: F) -> Option<usize> {
        if self.times.is_empty() || t < self.times[0] {
            return None;
        }
        let mut lo = 0usize;
        let mut hi = self.times.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.times[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

/// Fitted mixture cure model.
#[derive(Debug, Clone)]
pub struct LogisticCoxFit<F> {
    /// Incidence coefficients, intercept first (length p + 1).
    pub gamma: Vec<F>,
    /// Latency coefficients (length q).
    pub beta: Vec<F>,
    pub baseline: Baseline<F>,
    pub last_event_time: F,
    pub em_iterations: usize,
    /// Observed-data log-likelihood after each EM iteration.
    pub loglik_path: Vec<F>,
    pub converged: bool,
    /// Identifiability-diagnostic warnings (nonconstant covariates, plateau
    /// presence) and a non-convergence note when applicable.
    pub warnings: Vec<String>,
}

impl<F: Real> LogisticCoxFit<F> {
    pub fn loglik(&self) -> F {
        *self.loglik_path.last().expect("at least one EM iteration")
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "gamma": self.gamma.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            "beta": self.beta.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            "baseline": self
                .baseline
                .times
                .iter()
                .zip(&self.baseline.cum_hazard)
                .map(|(t, l)| json!({"time": t.to_f64_lossy(), "cumhaz": l.to_f64_lossy()}))
                .collect::<Vec<_>>(),
            "converged": self.converged,
            "iterations": self.em_iterations,
            "loglik": self.loglik().to_f64_lossy(),
            "warnings": self.warnings,
        })
    }
}

/// Dense row-major matrix for the small design matrices used here.
#[derive(Debug, Clone)]
pub struct Matrix<F> {
    pub n_rows: usize,
    pub n_cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { n_rows, n_cols, data }
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sigmoid<F: Real>(u: F) -> F {
    F::one() / (F::one() + (-u).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus<F: Real>(x: F) -> F {
    let cut = F::from_f64_lossy(30.0);
    if x > cut {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Solve `a x = b` (row-major, dim x dim) by Gaussian elimination with
/// partial pivoting.
fn solve<F: Real>(a: &[F], b: &[F], dim: usize) -> Result<Vec<F>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    let scale = a.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    let tol = F::from_f64_lossy(1e-12) * scale.max(F::one());
    let mut aug = vec![F::zero(); dim * (dim + 1)];
    for i in 0..dim {
        for j in 0..dim {
            aug[i * (dim + 1) + j] = a[i * dim + j];
        }
        aug[i * (dim + 1) + dim] = b[i];
    }
    for col in 0..dim {
        let mut piv = col;
        for row in col + 1..dim {
            if aug[row * (dim + 1) + col].abs() > aug[piv * (dim + 1) + col].abs() {
                piv = row;
            }
        }
        if !(aug[piv * (dim + 1) + col].abs() > tol) {
            return Err(Error::Singular("singular information matrix".into()));
        }
        if piv != col {
            for j in 0..=dim {
                aug.swap(col * (dim + 1) + j, piv * (dim + 1) + j);
            }
        }
        let pivot = aug[col * (dim + 1) + col];
        for row in col + 1..dim {
            let factor = aug[row * (dim + 1) + col] / pivot;
            for j in col..=dim {
                let v = aug[col * (dim + 1) + j];
                aug[row * (dim + 1) + j] = aug[row * (dim + 1) + j] - factor * v;
            }
        }
    }
    let mut x = vec![F::zero(); dim];
    for i in (0..dim).rev() {
        let mut s = aug[i * (dim + 1) + dim];
        for j in i + 1..dim {
            s = s - aug[i * (dim + 1) + j] * x[j];
        }
        x[i] = s / aug[i * (dim + 1) + i];
    }
    Ok(x)
}

/// Damped Newton ascent; `eval` returns (objective, score, information).
/// A step is accepted when the objective does not decrease (within slack);
/// evaluation failures during step-halving shrink the step instead of
/// aborting. Returns the iterate and whether the tolerance was met; hard
/// failures (singular information) remain errors.
fn damped_newton_core<F: Real>(
    mut params: Vec<F>,
    tol: F,
    max_iter: usize,
    tolerate_singular: bool,
    mut eval: impl FnMut(&[F]) -> Result<(F, Vec<F>, Vec<F>)>,
) -> Result<(Vec<F>, bool)> {
    if params.is_empty() {
        return Ok((params, true));
    }
    let slack = F::from_f64_lossy(1e-10);
    let (mut obj, mut score, mut info) = eval(&params)?;
    for _ in 0..max_iter {
        // a singular information matrix along a drift path (coefficients
        // running off under quasi-separation) is a stall, not a design
        // defect, when the caller has already verified the design rank
        let delta = match solve(&info, &score, params.len()) {
            Ok(d) => d,
            Err(e) => {
                if tolerate_singular {
                    return Ok((params, false));
                }
                return Err(e);
            }
        };
        let max_delta = delta.iter().fold(F::zero(), |m, v| m.max(v.abs()));
        if max_delta < tol {
            return Ok((params, true));
        }
        let mut step = F::one();
        loop {
            let trial: Vec<F> =
                params.iter().zip(&delta).map(|(&p, &d)| p + step * d).collect();
            match eval(&trial) {
                Ok((o2, s2, i2)) if o2 >= obj - slack => {
                    params = trial;
                    obj = o2;
                    score = s2;
                    info = i2;
                    break;
                }
                _ => {
                    step = step / F::from_f64_lossy(2.0);
                    if step < F::from_f64_lossy(1e-10) {
                        // stalled against the boundary (e.g. separation)
                        return Ok((params, false));
                    }
                }
            }
        }
    }
    Ok((params, false))
}

/// Strict variant: non-convergence is an error.
fn damped_newton<F: Real>(
    params: Vec<F>,
    tol: F,
    max_iter: usize,
    context: &str,
    eval: impl FnMut(&[F]) -> Result<(F, Vec<F>, Vec<F>)>,
) -> Result<Vec<F>> {
    match damped_newton_core(params, tol, max_iter, false, eval)? {
        (p, true) => Ok(p),
        (_, false) => Err(Error::NonConvergence(format!(
            "{context}: did not converge in {max_iter} Newton steps (possible separation)"
        ))),
    }
}

/// Posterior uncured weights: 1 for events, `pi S_u / (1 - pi + pi S_u)`
/// for censored observations, 0 in the plateau (zero-tail constraint).
pub fn e_step_weights<F: Real>(
    times: &[F],
    events: &[bool],
    x: &Matrix<F>,
    z: &Matrix<F>,
    gamma: &[F],
    beta: &[F],
    baseline: &Baseline<F>,
) -> Vec<F> {
    let tau = baseline.last_time();
    (0..times.len())
        .map(|j| {
            if events[j] {
                return F::one();
            }
            if times[j] > tau {
                return F::zero();
            }
            let pi = sigmoid(dot(gamma, x.row(j)));
            let su = (-baseline.eval(times[j]) * dot(beta, z.row(j)).exp()).exp();
            pi * su / (F::one() - pi + pi * su)
        })
        .collect()
}

fn incidence_eval<F: Real>(x: &Matrix<F>, w: &[F], gamma: &[F]) -> Result<(F, Vec<F>, Vec<F>)> {
    let dim = x.n_cols;
    let sep_cut = F::from_f64_lossy(30.0);
    let mut obj = F::zero();
    let mut score = vec![F::zero(); dim];
    let mut info = vec![F::zero(); dim * dim];
    for j in 0..x.n_rows {
        let row = x.row(j);
        let eta = dot(gamma, row);
        if eta.abs() > sep_cut {
            return Err(Error::NonConvergence(
                "incidence quasi-separation: fitted probabilities pinned at 0/1".into(),
            ));
        }
        let p = sigmoid(eta);
        obj = obj - w[j] * softplus(-eta) - (F::one() - w[j]) * softplus(eta);
        let resid = w[j] - p;
        let curv = p * (F::one() - p);
        for a in 0..dim {
            score[a] = score[a] + resid * row[a];
            for b in 0..dim {
                info[a * dim + b] = info[a * dim + b] + curv * row[a] * row[b];
            }
        }
    }
    Ok((obj, score, info))
}

fn remap_incidence(e: Error) -> Error {
    match e {
        Error::Singular(_) => Error::Singular("incidence design rank-deficient".into()),
        other => other,
    }
}

/// Weighted logistic maximization of
/// `sum w log(sigmoid) + (1 - w) log(1 - sigmoid)` by damped Newton.
pub fn m_step_incidence<F: Real>(
    x: &Matrix<F>,
    w: &[F],
    init: &[F],
    config: &EmConfig<F>,
) -> Result<Vec<F>> {
    damped_newton(init.to_vec(), config.inner_tol, config.max_inner, "incidence", |gamma| {
        incidence_eval(x, w, gamma)
    })
    .map_err(remap_incidence)
}

/// Tolerant variant used inside the EM: a maximization that stalls (e.g.
/// quasi-separation) keeps its best iterate instead of failing.
fn m_step_incidence_soft<F: Real>(
    x: &Matrix<F>,
    w: &[F],
    init: &[F],
    config: &EmConfig<F>,
) -> Result<(Vec<F>, bool)> {
    damped_newton_core(init.to_vec(), config.inner_tol, config.max_inner, true, |gamma| {
        incidence_eval(x, w, gamma)
    })
    .map_err(remap_incidence)
}

/// Risk-set structure shared by the latency computations: indices sorted by
/// descending time, and per distinct event time the rows with events there.
struct RiskSets<F> {
    desc_order: Vec<usize>,
    /// (event time, rows with events at that time), times ascending.
    event_groups: Vec<(F, Vec<usize>)>,
}

impl<F: Real> RiskSets<F> {
    fn build(times: &[F], events: &[bool]) -> Result<Self> {
        let n = times.len();
        let mut desc_order: Vec<usize> = (0..n).collect();
        desc_order
            .sort_unstable_by(|&a, &b| times[b].partial_cmp(&times[a]).expect("finite times"));
        let mut event_groups: Vec<(F, Vec<usize>)> = Vec::new();
        let mut asc: Vec<usize> = (0..n).filter(|&j| events[j]).collect();
        asc.sort_unstable_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
        for j in asc {
            match event_groups.last_mut() {
                Some((t, rows)) if *t == times[j] => rows.push(j),
                _ => event_groups.push((times[j], vec![j])),
            }
        }
        if event_groups.is_empty() {
            return Err(Error::NoEvents("latency".into()));
        }
        Ok(RiskSets { desc_order, event_groups })
    }
}

/// Weighted partial log-likelihood, score, and information for `beta`.
fn cox_eval<F: Real>(
    times: &[F],
    z: &Matrix<F>,
    w: &[F],
    risk: &RiskSets<F>,
    beta: &[F],
) -> Result<(F, Vec<F>, Vec<F>)> {
    let q = z.n_cols;
    let mut obj = F::zero();
    let mut score = vec![F::zero(); q];
    let mut info = vec![F::zero(); q * q];

    let mut s0 = F::zero();
    let mut s1 = vec![F::zero(); q];
    let mut s2 = vec![F::zero(); q * q];
    let mut ptr = 0usize;
    for (t, rows) in risk.event_groups.iter().rev() {
        while ptr < risk.desc_order.len() {
            let k = risk.desc_order[ptr];
            if times[k] < *t {
                break;
            }
            let wk = w[k] * dot(beta, z.row(k)).exp();
            if !wk.is_finite() {
                return Err(Error::NonConvergence("latency linear predictor overflow".into()));
            }
            s0 = s0 + wk;
            let zk = z.row(k);
            for a in 0..q {
                s1[a] = s1[a] + wk * zk[a];
                for b in 0..q {
                    s2[a * q + b] = s2[a * q + b] + wk * zk[a] * zk[b];
                }
            }
            ptr += 1;
        }
        if !(s0 > F::zero()) {
            return Err(Error::Degenerate("empty weighted risk set at an event time".into()));
        }
        let d = F::from_count(rows.len());
        for &j in rows {
            obj = obj + dot(beta, z.row(j));
            for a in 0..q {
                score[a] = score[a] + z.row(j)[a];
            }
        }
        obj = obj - d * s0.ln();
        for a in 0..q {
            score[a] = score[a] - d * s1[a] / s0;
            for b in 0..q {
                info[a * q + b] =
                    info[a * q + b] + d * (s2[a * q + b] / s0 - s1[a] * s1[b] / (s0 * s0));
            }
        }
    }
    Ok((obj, score, info))
}

/// Weighted Breslow cumulative hazard at the event-time grid for a given
/// `beta`: increment `d(s) / sum_{Y_k >= s} w_k exp(beta' z_k)`.
pub fn breslow_baseline<F: Real>(
    times: &[F],
    events: &[bool],
    z: &Matrix<F>,
    w: &[F],
    beta: &[F],
) -> Result<Baseline<F>> {
    let risk = RiskSets::build(times, events)?;
    let mut out_times = Vec::with_capacity(risk.event_groups.len());
    let mut cum = Vec::with_capacity(risk.event_groups.len());
    let mut acc = F::zero();
    let mut s0 = F::zero();
    let mut ptr = 0usize;
    let mut increments = Vec::with_capacity(risk.event_groups.len());
    for (t, rows) in risk.event_groups.iter().rev() {
        while ptr < risk.desc_order.len() {
            let k = risk.desc_order[ptr];
            if times[k] < *t {
                break;
            }
            s0 = s0 + w[k] * dot(beta, z.row(k)).exp();
            ptr += 1;
        }
        if !(s0 > F::zero()) {
            return Err(Error::Degenerate("empty weighted risk set at an event time".into()));
        }
        increments.push((*t, F::from_count(rows.len()) / s0));
    }
    for (t, inc) in increments.into_iter().rev() {
        acc = acc + inc;
        out_times.push(t);
        cum.push(acc);
    }
    Ok(Baseline { times: out_times, cum_hazard: cum })
}

fn remap_latency(e: Error) -> Error {
    match e {
        Error::Singular(_) => {
            Error::Singular("latency design singular: no within-risk-set covariate variance".into())
        }
        other => other,
    }
}

/// Latency M-step: maximize the weighted partial likelihood in `beta`
/// (events carry weight one; censored subjects enter risk sets with their
/// posterior weights), then compute the weighted Breslow baseline.
pub fn m_step_latency<F: Real>(
    times: &[F],
    events: &[bool],
    z: &Matrix<F>,
    w: &[F],
    beta_init: &[F],
    config: &EmConfig<F>,
) -> Result<(Vec<F>, Baseline<F>)> {
    let risk = RiskSets::build(times, events)?;
    let beta = damped_newton(
        beta_init.to_vec(),
        config.inner_tol,
        config.max_inner,
        "latency",
        |b| cox_eval(times, z, w, &risk, b),
    )
    .map_err(remap_latency)?;
    let baseline = breslow_baseline(times, events, z, w, &beta)?;
    Ok((beta, baseline))
}

/// Tolerant variant used inside the EM (see `m_step_incidence_soft`).
fn m_step_latency_soft<F: Real>(
    times: &[F],
    events: &[bool],
    z: &Matrix<F>,
    w: &[F],
    beta_init: &[F],
    config: &EmConfig<F>,
) -> Result<((Vec<F>, Baseline<F>), bool)> {
    let risk = RiskSets::build(times, events)?;
    let (beta, converged) =
        damped_newton_core(beta_init.to_vec(), config.inner_tol, config.max_inner, true, |b| {
            cox_eval(times, z, w, &risk, b)
        })
        .map_err(remap_latency)?;
    let baseline = breslow_baseline(times, events, z, w, &beta)?;
    Ok(((beta, baseline), converged))
}

/// Observed-data log-likelihood. Events contribute
/// `log pi + log dLambda(Y) + beta'z - Lambda(Y) exp(beta'z)` (the discrete
/// form whose stationary points coincide with the EM fixed points); censored
/// observations contribute `log(1 - pi + pi S_u(Y|z))` with the zero tail.
pub fn observed_loglik<F: Real>(
    times: &[F],
    events: &[bool],
    x: &Matrix<F>,
    z: &Matrix<F>,
    gamma: &[F],
    beta: &[F],
    baseline: &Baseline<F>,
) -> Result<F> {
    let tau = baseline.last_time();
    let mut total = F::zero();
    for j in 0..times.len() {
        let eta = dot(gamma, x.row(j));
        if events[j] {
            let inc = baseline.increment_at(times[j]).ok_or_else(|| {
                Error::Validation(format!(
                    "event at {} has zero density: no baseline step there",
                    times[j]
                ))
            })?;
            let ebz = dot(beta, z.row(j)).exp();
            total = total - softplus(-eta) + inc.ln() + dot(beta, z.row(j))
                - baseline.eval(times[j]) * ebz;
        } else {
            let su = if times[j] > tau {
                F::zero()
            } else {
                (-baseline.eval(times[j]) * dot(beta, z.row(j)).exp()).exp()
            };
            let pi = sigmoid(eta);
            total = total + (F::one() - pi + pi * su).ln();
        }
    }
    Ok(total)
}

/// Design view of a sample for the cure model.
pub(crate) struct CureData<F> {
    pub times: Vec<F>,
    pub events: Vec<bool>,
    pub x: Matrix<F>,
    pub z: Matrix<F>,
}

impl<F: Real> CureData<F> {
    pub fn from_sample(sample: &SurvivalSample<F>) -> Result<Self> {
        sample.covariate_dims()?;
        let times: Vec<F> = sample.records.iter().map(|r| r.time).collect();
        let events: Vec<bool> = sample.records.iter().map(|r| r.event).collect();
        let x_rows: Vec<Vec<F>> = sample
            .records
            .iter()
            .map(|r| {
                let mut row = Vec::with_capacity(r.x.len() + 1);
                row.push(F::one());
                row.extend_from_slice(&r.x);
                row
            })
            .collect();
        let z_rows: Vec<Vec<F>> = sample.records.iter().map(|r| r.z.clone()).collect();
        Ok(CureData { times, events, x: Matrix::from_rows(&x_rows), z: Matrix::from_rows(&z_rows) })
    }
}

fn identifiability_warnings<F: Real>(data: &CureData<F>) -> Vec<String> {
    let mut warnings = Vec::new();
    let constant = |m: &Matrix<F>, col: usize| -> bool {
        (1..m.n_rows).all(|i| m.row(i)[col] == m.row(0)[col])
    };
    for c in 1..data.x.n_cols {
        if constant(&data.x, c) {
            warnings.push(format!("incidence covariate {} is constant", c - 1));
        }
    }
    for c in 0..data.z.n_cols {
        if constant(&data.z, c) {
            warnings.push(format!("latency covariate {c} is constant"));
        }
    }
    let last_event = data
        .times
        .iter()
        .zip(&data.events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .fold(F::neg_infinity(), F::max);
    let plateau = data
        .times
        .iter()
        .zip(&data.events)
        .filter(|(&t, &e)| !e && t > last_event)
        .count();
    if plateau == 0 {
        warnings.push("no censored observations after the last event: follow-up may be insufficient".into());
    }
    warnings
}

/// Fit the mixture cure model by EM. Initial values come from an unweighted
/// logistic fit of the event indicator and an unweighted Cox/Breslow fit.
/// Non-convergence yields a fit with `converged = false` rather than an
/// error; inner solver failures propagate.
pub fn fit_logistic_cox<F: Real>(
    sample: &SurvivalSample<F>,
    config: &EmConfig<F>,
) -> Result<LogisticCoxFit<F>> {
    fit_logistic_cox_jittered(sample, config, F::zero(), 0)
}

/// Uniqueness of the likelihood maximizer cannot be verified computationally;
/// as a diagnostic, refit from coefficient initializations jittered by
/// `spread` and report the largest coefficient distance of any restart from
/// the reference fit. Small values indicate a stable limit.
pub fn restart_stability<F: Real>(
    sample: &SurvivalSample<F>,
    config: &EmConfig<F>,
    spread: F,
    restarts: usize,
    seed: u64,
) -> Result<F> {
    let reference = fit_logistic_cox(sample, config)?;
    let mut worst = F::zero();
    for r in 0..restarts {
        let fit = fit_logistic_cox_jittered(
            sample,
            config,
            spread,
            crate::resampling::derive_seed(seed, &[r as u64]),
        )?;
        for (a, b) in fit.gamma.iter().zip(&reference.gamma) {
            worst = worst.max((*a - *b).abs());
        }
        for (a, b) in fit.beta.iter().zip(&reference.beta) {
            worst = worst.max((*a - *b).abs());
        }
    }
    Ok(worst)
}

fn fit_logistic_cox_jittered<F: Real>(
    sample: &SurvivalSample<F>,
    config: &EmConfig<F>,
    spread: F,
    jitter_seed: u64,
) -> Result<LogisticCoxFit<F>> {
    let data = CureData::from_sample(sample)?;
    let mut warnings = identifiability_warnings(&data);

    // Structural rank checks at neutral parameter values; rank deficiency is
    // a hard error here, while a singular information matrix encountered
    // later along a coefficient drift path is treated as a stall.
    let delta_w: Vec<F> =
        data.events.iter().map(|&e| if e { F::one() } else { F::zero() }).collect();
    let gamma0 = vec![F::zero(); data.x.n_cols];
    let ones_check = vec![F::one(); data.times.len()];
    {
        let (_, score, info) = incidence_eval(&data.x, &delta_w, &gamma0)?;
        solve(&info, &score, data.x.n_cols).map_err(remap_incidence)?;
        let risk = RiskSets::build(&data.times, &data.events)?;
        let (_, score, info) =
            cox_eval(&data.times, &data.z, &ones_check, &risk, &vec![F::zero(); data.z.n_cols])?;
        solve(&info, &score, data.z.n_cols).map_err(remap_latency)?;
    }

    // A stalled inner maximization (quasi-separation drives coefficients
    // toward infinity) keeps its best bounded iterate and the EM continues;
    // the mean-survival functionals depend on the incidence part only
    // through bounded posterior weights, so this mirrors how mixture-cure
    // fits are handled in practice. Hard failures still propagate.
    let mut inner_capped = false;
    let (mut gamma, ok) = m_step_incidence_soft(&data.x, &delta_w, &gamma0, config)?;
    inner_capped |= !ok;
    let ones = vec![F::one(); data.times.len()];
    let ((mut beta, mut baseline), ok) = m_step_latency_soft(
        &data.times,
        &data.events,
        &data.z,
        &ones,
        &vec![F::zero(); data.z.n_cols],
        config,
    )?;
    inner_capped |= !ok;
    if spread > F::zero() {
        use rand::Rng;
        let mut rng = crate::resampling::derive_rng(jitter_seed, &[]);
        for g in gamma.iter_mut().chain(beta.iter_mut()) {
            let u = F::from_f64_lossy(rng.gen::<f64>() * 2.0 - 1.0);
            *g = *g + spread * u;
        }
        let w = e_step_weights(&data.times, &data.events, &data.x, &data.z, &gamma, &beta, &baseline);
        let ((b2, base2), _) =
            m_step_latency_soft(&data.times, &data.events, &data.z, &w, &beta, config)?;
        beta = b2;
        baseline = base2;
    }

    let mut loglik_path = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        iterations += 1;
        let w = e_step_weights(&data.times, &data.events, &data.x, &data.z, &gamma, &beta, &baseline);
        let (gamma_new, ok) = m_step_incidence_soft(&data.x, &w, &gamma, config)?;
        inner_capped |= !ok;
        let ((beta_new, baseline_new), ok) =
            m_step_latency_soft(&data.times, &data.events, &data.z, &w, &beta, config)?;
        inner_capped |= !ok;
        loglik_path.push(observed_loglik(
            &data.times,
            &data.events,
            &data.x,
            &data.z,
            &gamma_new,
            &beta_new,
            &baseline_new,
        )?);

        let mut delta = F::zero();
        for (a, b) in gamma_new.iter().zip(&gamma) {
            delta = delta.max((*a - *b).abs());
        }
        for (a, b) in beta_new.iter().zip(&beta) {
            delta = delta.max((*a - *b).abs());
        }
        for (a, b) in baseline_new.cum_hazard.iter().zip(&baseline.cum_hazard) {
            delta = delta.max((*a - *b).abs());
        }
        gamma = gamma_new;
        beta = beta_new;
        baseline = baseline_new;
        if delta < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("EM did not converge within {} iterations", config.max_iter));
    }
    if inner_capped {
        warnings.push(
            "an inner maximization hit its step cap (quasi-separation); coefficients kept at the best bounded iterate"
                .into(),
        );
    }
    Ok(LogisticCoxFit {
        gamma,
        beta,
        last_event_time: baseline.last_time(),
        baseline,
        em_iterations: iterations,
        loglik_path,
        converged,
        warnings,
    })
}

/// Public wrapper of the E-step on a sample.
pub fn e_step_weights_sample<F: Real>(
    sample: &SurvivalSample<F>,
    gamma: &[F],
    beta: &[F],
    baseline: &Baseline<F>,
) -> Result<Vec<F>> {
    let data = CureData::from_sample(sample)?;
    Ok(e_step_weights(&data.times, &data.events, &data.x, &data.z, gamma, beta, baseline))
}

/// Public wrapper of the observed log-likelihood on a sample.
pub fn observed_loglik_sample<F: Real>(
    sample: &SurvivalSample<F>,
    gamma: &[F],
    beta: &[F],
    baseline: &Baseline<F>,
) -> Result<F> {
    let data = CureData::from_sample(sample)?;
    observed_loglik(&data.times, &data.events, &data.x, &data.z, gamma, beta, baseline)
}

impl<F: Real> LogisticCoxFit<F> {
    /// Conditional survival of the uncured: `exp(-Lambda(t) exp(beta'z))`,
    /// zero beyond the last event time.
    pub fn conditional_survival(&self, z: &[F], t: F) -> Result<F> {
        self.check_z(z)?;
        if t > self.last_event_time {
            return Ok(F::zero());
        }
        Ok((-self.baseline.eval(t) * dot(&self.beta, z).exp()).exp())
    }

    /// Conditional mean survival time of the uncured: the exact step-function
    /// integral of the conditional survival over `[0, last event time]`.
    pub fn conditional_mst(&self, z: &[F]) -> Result<F> {
        self.check_z(z)?;
        let ebz = dot(&self.beta, z).exp();
        let mut total = F::zero();
        let mut left = F::zero();
        let mut surv = F::one();
        for i in 0..self.baseline.times.len() {
            let right = self.baseline.times[i];
            total = total + surv * (right - left);
            left = right;
            surv = (-self.baseline.cum_hazard[i] * ebz).exp();
        }
        Ok(total)
    }

    fn check_z(&self, z: &[F]) -> Result<()> {
        if z.len() != self.beta.len() {
            return Err(Error::Validation(format!(
                "covariate vector has dimension {}, model expects {}",
                z.len(),
                self.beta.len()
            )));
        }
        Ok(())
    }
}
