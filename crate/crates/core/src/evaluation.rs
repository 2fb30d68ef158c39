//! Monte-Carlo evaluation of a port set: per-DoA error histograms and
//! aggregate RMSE over a grid of true directions.
//!
//! Every trial draws its noise from a generator seeded by
//! `(master_seed, doa_index, trial_index)`, so results do not depend on how
//! trials are scheduled across worker threads.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{add_noise_with, steering_vector, Estimator, SnrReference, SteeringVector};
use crate::geometry::{azimuth_error, elevation_error, great_circle_error, DoaGrid};
use crate::patterns::{Direction, PortSet};
use crate::stats;

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_BIN_WIDTH_DEG: f64 = 5.0;
pub const DEFAULT_ADAPTIVE_TOL: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdaptiveStop {
    /// Stability tolerance on normalized histogram bins.
    pub tol: f64,
    /// Upper bound on trials per DoA.
    pub max_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloConfig {
    pub snr_db: f64,
    pub snr_reference: SnrReference,
    pub trials_per_doa: usize,
    pub master_seed: u64,
    pub bin_width_deg: f64,
    /// Snapshots averaged into the covariance; 1 is the single-snapshot estimator.
    pub snapshots: usize,
    pub keep_trials: bool,
    pub adaptive: Option<AdaptiveStop>,
}

impl MonteCarloConfig {
    pub fn new(snr_db: f64, trials_per_doa: usize, master_seed: u64) -> Self {
        Self {
            snr_db,
            snr_reference: SnrReference::PerPort,
            trials_per_doa,
            master_seed,
            bin_width_deg: DEFAULT_BIN_WIDTH_DEG,
            snapshots: 1,
            keep_trials: false,
            adaptive: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials_per_doa == 0 {
            return Err(Error::InvalidParameter(
                "trials per DoA must be >= 1".into(),
            ));
        }
        if self.snapshots == 0 {
            return Err(Error::InvalidParameter("snapshots must be >= 1".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "invalid SNR {}",
                self.snr_db
            )));
        }
        if !(self.bin_width_deg > 0.0 && self.bin_width_deg <= 180.0) {
            return Err(Error::InvalidParameter(format!(
                "histogram bin width must lie in (0°, 180°], got {}",
                self.bin_width_deg
            )));
        }
        if let Some(a) = self.adaptive {
            if !(a.tol > 0.0) || a.max_trials < self.trials_per_doa {
                return Err(Error::InvalidParameter(
                    "adaptive stop needs tol > 0 and max_trials >= trials".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One noisy estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub doa_index: usize,
    pub trial: usize,
    pub true_doa: Direction,
    pub estimated_doa: Direction,
    pub azimuth_error_deg: f64,
    pub elevation_error_deg: f64,
    pub great_circle_error_deg: f64,
    pub elevation_unidentifiable: bool,
}

/// Statistics of all trials at one true DoA.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoaSummary {
    pub doa_index: usize,
    pub true_doa: Direction,
    pub trials: usize,
    pub rmse_az: f64,
    pub rmse_el: f64,
    pub rmse_gc: f64,
    pub median_az: f64,
    pub median_el: f64,
    pub median_gc: f64,
    pub elevation_unidentifiable: usize,
    /// Counts of great-circle errors per bin of `bin_width_deg`, starting at 0°.
    pub histogram: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub trials: usize,
    pub rmse_gc: f64,
    pub rmse_az: f64,
    pub rmse_el: f64,
    pub median_gc: f64,
    pub median_az: f64,
    pub median_el: f64,
    pub mean_abs_gc: f64,
    pub mean_abs_az: f64,
    pub mean_abs_el: f64,
    pub elevation_unidentifiable_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunInfo {
    pub ports: Vec<String>,
    pub true_grid: String,
    pub true_grid_size: usize,
    pub candidate_grid: String,
    pub candidate_grid_size: usize,
    pub skipped_candidates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: MonteCarloConfig,
    pub run: RunInfo,
    pub aggregate: Aggregate,
    /// True DoAs whose steering vector vanishes; they carry no trials.
    pub skipped_doas: Vec<usize>,
    /// Doubling rounds performed by adaptive stopping.
    pub adaptive_rounds: usize,
    #[serde(skip)]
    pub doas: Vec<DoaSummary>,
    #[serde(skip)]
    pub trials: Option<Vec<TrialResult>>,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a salt into a new, well-mixed seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    mix(mix(seed) ^ salt)
}

/// Seed of one trial; independent of scheduling.
pub fn trial_seed(master_seed: u64, doa_index: usize, trial: usize) -> u64 {
    mix(mix(mix(master_seed) ^ doa_index as u64) ^ trial as u64)
}

pub fn bin_count(bin_width_deg: f64) -> usize {
    (180.0 / bin_width_deg).ceil() as usize
}

fn histogram(errors: impl Iterator<Item = f64>, bin_width_deg: f64) -> Vec<u64> {
    let bins = bin_count(bin_width_deg);
    let mut h = vec![0u64; bins];
    for e in errors {
        let k = ((e / bin_width_deg).floor() as usize).min(bins - 1);
        h[k] += 1;
    }
    h
}

struct Simulation<'a> {
    ports: &'a PortSet,
    estimator: Estimator,
    config: &'a MonteCarloConfig,
}

impl Simulation<'_> {
    fn run_trials(
        &self,
        doa_index: usize,
        truth: &Direction,
        clean: &SteeringVector,
        trials: std::ops::Range<usize>,
    ) -> Result<Vec<TrialResult>> {
        trials
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(
                    self.config.master_seed,
                    doa_index,
                    trial,
                ));
                let snapshots: Vec<SteeringVector> = (0..self.config.snapshots)
                    .map(|_| {
                        add_noise_with(
                            clean,
                            self.config.snr_db,
                            self.config.snr_reference,
                            &mut rng,
                        )
                    })
                    .collect();
                let (est, _) = self.estimator.estimate_snapshots(&snapshots)?;
                let estimated = est.direction;
                Ok(TrialResult {
                    doa_index,
                    trial,
                    true_doa: *truth,
                    estimated_doa: estimated,
                    azimuth_error_deg: azimuth_error(estimated.phi_deg(), truth.phi_deg()),
                    elevation_error_deg: elevation_error(estimated.theta_deg(), truth.theta_deg()),
                    great_circle_error_deg: great_circle_error(&estimated, truth),
                    elevation_unidentifiable: est.elevation_unidentifiable,
                })
            })
            .collect()
    }
}

struct DoaTrials {
    index: usize,
    truth: Direction,
    clean: SteeringVector,
    results: Vec<TrialResult>,
}

fn summarize(d: &DoaTrials, bin_width_deg: f64) -> Result<DoaSummary> {
    let az: Vec<f64> = d.results.iter().map(|t| t.azimuth_error_deg).collect();
    let el: Vec<f64> = d.results.iter().map(|t| t.elevation_error_deg).collect();
    let gc: Vec<f64> = d.results.iter().map(|t| t.great_circle_error_deg).collect();
    Ok(DoaSummary {
        doa_index: d.index,
        true_doa: d.truth,
        trials: d.results.len(),
        rmse_az: stats::rmse(&az)?,
        rmse_el: stats::rmse(&el)?,
        rmse_gc: stats::rmse(&gc)?,
        median_az: stats::median_abs(&az).unwrap_or(0.0),
        median_el: stats::median_abs(&el).unwrap_or(0.0),
        median_gc: stats::median(&gc).unwrap_or(0.0),
        elevation_unidentifiable: d
            .results
            .iter()
            .filter(|t| t.elevation_unidentifiable)
            .count(),
        histogram: histogram(gc.iter().copied(), bin_width_deg),
    })
}

fn aggregate(all: &[&TrialResult]) -> Result<Aggregate> {
    let az: Vec<f64> = all.iter().map(|t| t.azimuth_error_deg).collect();
    let el: Vec<f64> = all.iter().map(|t| t.elevation_error_deg).collect();
    let gc: Vec<f64> = all.iter().map(|t| t.great_circle_error_deg).collect();
    let n = all.len();
    Ok(Aggregate {
        trials: n,
        rmse_gc: stats::rmse(&gc)?,
        rmse_az: stats::rmse(&az)?,
        rmse_el: stats::rmse(&el)?,
        median_gc: stats::median(&gc).unwrap_or(0.0),
        median_az: stats::median_abs(&az).unwrap_or(0.0),
        median_el: stats::median_abs(&el).unwrap_or(0.0),
        mean_abs_gc: stats::mean_abs(&gc).unwrap_or(0.0),
        mean_abs_az: stats::mean_abs(&az).unwrap_or(0.0),
        mean_abs_el: stats::mean_abs(&el).unwrap_or(0.0),
        elevation_unidentifiable_fraction: all.iter().filter(|t| t.elevation_unidentifiable).count()
            as f64
            / n as f64,
    })
}

/// Runs the Monte-Carlo evaluation on the current rayon pool.
pub fn run_monte_carlo(
    ports: &PortSet,
    true_grid: &DoaGrid,
    candidate_grid: &DoaGrid,
    config: &MonteCarloConfig,
) -> Result<EvalReport> {
    config.validate()?;
    if true_grid.is_empty() {
        return Err(Error::Empty("true grid"));
    }
    let sim = Simulation {
        ports,
        estimator: Estimator::new(ports, candidate_grid)?,
        config,
    };

    let mut skipped_doas = Vec::new();
    let mut doas = Vec::with_capacity(true_grid.len());
    for (index, truth) in true_grid.directions().iter().enumerate() {
        let clean = steering_vector(sim.ports, truth)?;
        if clean.normalize().is_err() {
            skipped_doas.push(index);
            continue;
        }
        doas.push(DoaTrials {
            index,
            truth: *truth,
            clean,
            results: Vec::new(),
        });
    }
    if doas.is_empty() {
        return Err(Error::Empty(
            "every true DoA has a vanishing steering vector",
        ));
    }

    let extend = |doas: &mut Vec<DoaTrials>, range: std::ops::Range<usize>| -> Result<()> {
        let new: Vec<Vec<TrialResult>> = doas
            .par_iter()
            .map(|d| sim.run_trials(d.index, &d.truth, &d.clean, range.clone()))
            .collect::<Result<_>>()?;
        for (d, r) in doas.iter_mut().zip(new) {
            d.results.extend(r);
        }
        Ok(())
    };

    let mut trials = config.trials_per_doa;
    extend(&mut doas, 0..trials)?;
    let mut adaptive_rounds = 0;
    if let Some(adaptive) = config.adaptive {
        while trials * 2 <= adaptive.max_trials {
            let before = doas
                .iter()
                .map(|d| summarize(d, config.bin_width_deg))
                .collect::<Result<Vec<_>>>()?;
            extend(&mut doas, trials..trials * 2)?;
            trials *= 2;
            adaptive_rounds += 1;
            let after = doas
                .iter()
                .map(|d| summarize(d, config.bin_width_deg))
                .collect::<Result<Vec<_>>>()?;
            if max_histogram_difference(&before, &after)? < adaptive.tol {
                break;
            }
        }
    }

    let summaries = doas
        .iter()
        .map(|d| summarize(d, config.bin_width_deg))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<&TrialResult> = doas.iter().flat_map(|d| d.results.iter()).collect();
    let aggregate = aggregate(&all)?;
    let trials_out = config
        .keep_trials
        .then(|| all.iter().map(|t| **t).collect());

    Ok(EvalReport {
        config: config.clone(),
        run: RunInfo {
            ports: ports.labels().to_vec(),
            true_grid: true_grid.describe(),
            true_grid_size: true_grid.len(),
            candidate_grid: candidate_grid.describe(),
            candidate_grid_size: candidate_grid.len(),
            skipped_candidates: sim.estimator.skipped(),
        },
        aggregate,
        skipped_doas,
        adaptive_rounds,
        doas: summaries,
        trials: trials_out,
    })
}

fn max_histogram_difference(a: &[DoaSummary], b: &[DoaSummary]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        if x.doa_index != y.doa_index || x.histogram.len() != y.histogram.len() {
            return Err(Error::InvalidParameter(
                "reports do not share DoAs and binning".into(),
            ));
        }
        if x.trials == 0 || y.trials == 0 {
            continue;
        }
        for (cx, cy) in x.histogram.iter().zip(&y.histogram) {
            let d = (*cx as f64 / x.trials as f64 - *cy as f64 / y.trials as f64).abs();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// True iff every normalized per-DoA histogram bin differs by less than `tol`.
pub fn histogram_stability(a: &EvalReport, b: &EvalReport, tol: f64) -> Result<bool> {
    if a.config.bin_width_deg != b.config.bin_width_deg {
        return Err(Error::InvalidParameter(format!(
            "mismatched binning: {}° vs {}°",
            a.config.bin_width_deg, b.config.bin_width_deg
        )));
    }
    Ok(max_histogram_difference(&a.doas, &b.doas)? < tol)
}

fn write_comments<W: Write>(w: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}").map_err(|e| Error::io("<report>", e))?;
    }
    Ok(())
}

impl EvalReport {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w).map_err(|e| Error::io("<report json>", e))?;
        Ok(())
    }

    /// Per-DoA rows: `doa_index,theta_deg,phi_deg,trials,rmse_az,rmse_el,rmse_gc,median_az,median_el`.
    pub fn write_doa_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        write_comments(&mut w, comments)?;
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "doa_index",
            "theta_deg",
            "phi_deg",
            "trials",
            "rmse_az",
            "rmse_el",
            "rmse_gc",
            "median_az",
            "median_el",
        ])?;
        for d in &self.doas {
            w.write_record(&[
                d.doa_index.to_string(),
                d.true_doa.theta_deg().to_string(),
                d.true_doa.phi_deg().to_string(),
                d.trials.to_string(),
                d.rmse_az.to_string(),
                d.rmse_el.to_string(),
                d.rmse_gc.to_string(),
                d.median_az.to_string(),
                d.median_el.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report csv>", e))?;
        Ok(())
    }

    /// `doa_index,bin_lo_deg,bin_hi_deg,count`
    pub fn write_histogram_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        write_comments(&mut w, comments)?;
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["doa_index", "bin_lo_deg", "bin_hi_deg", "count"])?;
        let width = self.config.bin_width_deg;
        for d in &self.doas {
            for (k, count) in d.histogram.iter().enumerate() {
                let lo = k as f64 * width;
                let hi = ((k + 1) as f64 * width).min(180.0);
                w.write_record(&[
                    d.doa_index.to_string(),
                    lo.to_string(),
                    hi.to_string(),
                    count.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<histogram csv>", e))?;
        Ok(())
    }

    /// Per-trial rows; empty body unless trials were kept.
    pub fn write_trials_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        write_comments(&mut w, comments)?;
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "doa_index",
            "trial",
            "true_theta_deg",
            "true_phi_deg",
            "est_theta_deg",
            "est_phi_deg",
            "az_err_deg",
            "el_err_deg",
            "gc_err_deg",
        ])?;
        for t in self.trials.iter().flatten() {
            w.write_record(&[
                t.doa_index.to_string(),
                t.trial.to_string(),
                t.true_doa.theta_deg().to_string(),
                t.true_doa.phi_deg().to_string(),
                t.estimated_doa.theta_deg().to_string(),
                t.estimated_doa.phi_deg().to_string(),
                t.azimuth_error_deg.to_string(),
                t.elevation_error_deg.to_string(),
                t.great_circle_error_deg.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trials csv>", e))?;
        Ok(())
    }
}
