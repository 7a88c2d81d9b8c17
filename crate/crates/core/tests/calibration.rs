//! Monte Carlo calibration of the plug-in standard deviation: over
//! replications of the exchangeable setting at n1 = n2 = 200, the sampling
//! standard deviation of the scaled difference must match the average
//! plug-in value within 10%.

use mstu_core::km::fit_km;
use mstu_core::mst::two_sample_estimate;
use mstu_core::resampling::{derive_rng, ReplicateStream, Scheme};
use mstu_core::sim::{sample_setting, setting, true_m, SettingId};

#[test]
fn plugin_sigma_tracks_sampling_sd() {
    let spec = setting::<f64>(SettingId::I1);
    let truth = true_m(&spec, &[]);
    let reps = 600usize;
    let stream = ReplicateStream::new(314, reps, Scheme::Permutation);
    let results = mstu_core::resampling::run_replicates(&stream, 2, |r, _| {
        let mut rng = derive_rng(314, &[r as u64, mstu_core::resampling::STREAM_DATA]);
        let ds = sample_setting(&spec, 200, 200, &mut rng);
        let f1 = fit_km(&ds.sample1)?;
        let f2 = fit_km(&ds.sample2)?;
        let est = two_sample_estimate(&f1, &f2)?;
        Ok((est.rate_factor * (est.diff - truth), est.sigma))
    });
    let draws: Vec<(f64, f64)> = results.into_iter().map(|r| r.unwrap()).collect();
    let n = draws.len() as f64;
    let mean_stat = draws.iter().map(|d| d.0).sum::<f64>() / n;
    let sd_stat = (draws.iter().map(|d| (d.0 - mean_stat).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mean_sigma = draws.iter().map(|d| d.1).sum::<f64>() / n;
    let ratio = sd_stat / mean_sigma;
    assert!(
        (0.9..=1.1).contains(&ratio),
        "sampling sd {sd_stat:.4} vs mean plug-in sigma {mean_sigma:.4} (ratio {ratio:.3})"
    );
}
