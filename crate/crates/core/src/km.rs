//! Kaplan-Meier estimation with cure fraction and the variance process of
//! the survival estimate.

use std::io::Write;

use crate::data::{SurvivalRecord, SurvivalSample, TwoSampleDataset};
use crate::error::{Error, Result};
use crate::real::Real;

/// Product-limit fit of one sample.
///
/// The survival estimate is a right-continuous step function, `1` before the
/// first event and equal to the cure fraction at and after the last event
/// time. `var_process` holds the cumulative, `n`-scaled variance process of
/// the estimate at each event time; its increment at time `u` is
/// `n * d(u) / (r(u) * (r(u) - d(u)))`, skipped at the last event time when
/// the risk set is exhausted there (every downstream use multiplies it by a
/// factor that vanishes in that case).
#[derive(Debug, Clone, PartialEq)]
pub struct KmFit<F> {
    /// Distinct times with at least one event, strictly increasing.
    pub event_times: Vec<F>,
    /// Survival estimate at each event time.
    pub survival: Vec<F>,
    /// Risk-set size at each event time.
    pub at_risk: Vec<usize>,
    /// Number of events at each event time.
    pub events: Vec<usize>,
    /// Cumulative variance process at each event time.
    pub var_process: Vec<F>,
    /// Survival at the last event time.
    pub cure_fraction: F,
    /// Largest observed event time.
    pub last_event_time: F,
    /// Sample size.
    pub n: usize,
}

/// Fit the product-limit estimator. Ties of events and censorings at the same
/// time are resolved with events first: censored records stay in the risk set
/// for that time.
pub fn fit_km<F: Real>(sample: &SurvivalSample<F>) -> Result<KmFit<F>> {
    fit_records(&sample.records, &sample.label)
}

/// Fit on the concatenation of both samples.
pub fn fit_pooled<F: Real>(ds: &TwoSampleDataset<F>) -> Result<KmFit<F>> {
    let pooled = ds.pooled_records();
    fit_records(&pooled, "pooled")
}

pub(crate) fn fit_records<F: Real>(records: &[SurvivalRecord<F>], label: &str) -> Result<KmFit<F>> {
    if records.iter().filter(|r| r.event).count() == 0 {
        return Err(Error::NoEvents(label.to_string()));
    }
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        records[a].time.partial_cmp(&records[b].time).expect("times are finite")
    });

    let mut event_times = Vec::new();
    let mut survival = Vec::new();
    let mut at_risk = Vec::new();
    let mut events = Vec::new();
    let mut var_process = Vec::new();

    let nf = F::from_count(n);
    let mut surv = F::one();
    let mut var = F::zero();
    let mut risk = n;
    let mut i = 0;
    while i < n {
        let t = records[order[i]].time;
        let mut d = 0usize;
        let mut c = 0usize;
        while i < n && records[order[i]].time == t {
            if records[order[i]].event {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            let rf = F::from_count(risk);
            let df = F::from_count(d);
            surv = surv * (F::one() - df / rf);
            if risk > d {
                var = var + nf * df / (rf * (rf - df));
            }
            // risk == d can only happen at the final step; the increment is
            // skipped there because 1 - H(u-) = 0 makes it undefined, and the
            // cure fraction is 0 so it never enters a formula.
            event_times.push(t);
            survival.push(surv);
            at_risk.push(risk);
            events.push(d);
            var_process.push(var);
        }
        risk -= d + c;
    }

    Ok(KmFit {
        cure_fraction: *survival.last().unwrap(),
        last_event_time: *event_times.last().unwrap(),
        event_times,
        survival,
        at_risk,
        events,
        var_process,
        n,
    })
}

impl<F: Real> KmFit<F> {
    /// Right-continuous step evaluation of the survival estimate.
    pub fn eval_survival(&self, t: F) -> F {
        match step_index(&self.event_times, t) {
            None => F::one(),
            Some(i) => self.survival[i],
        }
    }

    /// Right-continuous step evaluation of the variance process.
    pub fn eval_var_process(&self, t: F) -> F {
        match step_index(&self.event_times, t) {
            None => F::zero(),
            Some(i) => self.var_process[i],
        }
    }

    /// Variance process at the last event time.
    pub fn var_process_at_end(&self) -> F {
        *self.var_process.last().unwrap()
    }

    /// Integration grid over `[0, last_event_time]`: per constancy cell the
    /// left edge, width, survival value, and variance-process value.
    pub(crate) fn cells(&self) -> Vec<Cell<F>> {
        let mut cells = Vec::with_capacity(self.event_times.len());
        let mut left = F::zero();
        let mut surv = F::one();
        let mut var = F::zero();
        for i in 0..self.event_times.len() {
            let right = self.event_times[i];
            if right > left {
                cells.push(Cell { width: right - left, survival: surv, var: var });
            }
            left = right;
            surv = self.survival[i];
            var = self.var_process[i];
        }
        cells
    }

    /// Export the step curve as CSV (`time,survival,at_risk,events,var_process`).
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,survival,at_risk,events,var_process")?;
        for i in 0..self.event_times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.event_times[i],
                self.survival[i],
                self.at_risk[i],
                self.events[i],
                self.var_process[i]
            )?;
        }
        Ok(())
    }
}

/// One constancy interval of the step functions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cell<F> {
    pub width: F,
    pub survival: F,
    pub var: F,
}

/// Index of the last element of `times` that is `<= t`, if any.
fn step_index<F: Real>(times: &[F], t: F) -> Option<usize> {
    if times.is_empty() || t < times[0] {
        return None;
    }
    let mut lo = 0usize;
    let mut hi = times.len();
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if times[mid] <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}
