//! Post-processing of track-style DoA observations.
//!
//! A track pairs true directions with either recorded steering vectors or
//! directions estimated elsewhere. The statistics follow a fixed pipeline:
//! azimuth offset correction, outlier exclusion by azimuth error, and box-plot
//! summaries binned by true theta.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{Estimator, SteeringVector};
use crate::geometry::{azimuth_error, elevation_error};
use crate::patterns::{wrap_360, Direction};
use crate::stats;

pub const DEFAULT_OUTLIER_THRESHOLD_DEG: f64 = 90.0;
pub const DEFAULT_BIN_WIDTH_DEG: f64 = 10.0;
pub const WHISKER_IQR: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    Steering(SteeringVector),
    Estimated(Direction),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackSample {
    pub timestamp: f64,
    pub true_doa: Direction,
    pub observation: Observation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TrackMode {
    Estimated,
    Steering { ports: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    mode: TrackMode,
    samples: Vec<TrackSample>,
}

impl Track {
    /// Checks that timestamps increase strictly and observations match `mode`.
    pub fn new(mode: TrackMode, samples: Vec<TrackSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("track has no samples"));
        }
        if let Some(k) = samples
            .windows(2)
            .position(|w| !(w[1].timestamp > w[0].timestamp))
        {
            return Err(Error::Malformed(format!(
                "timestamps not strictly increasing at sample {}",
                k + 1
            )));
        }
        for s in &samples {
            match (&s.observation, mode) {
                (Observation::Estimated(_), TrackMode::Estimated) => {}
                (Observation::Steering(x), TrackMode::Steering { ports }) if x.len() == ports => {}
                (Observation::Steering(x), TrackMode::Steering { ports }) => {
                    return Err(Error::DimensionMismatch {
                        expected: ports,
                        actual: x.len(),
                    })
                }
                _ => {
                    return Err(Error::Malformed(
                        "observation does not match track mode".into(),
                    ))
                }
            }
        }
        Ok(Self { mode, samples })
    }

    pub fn mode(&self) -> TrackMode {
        self.mode
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }
}

/// One true/estimated pair with its errors (estimate minus truth).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayPair {
    pub timestamp: f64,
    pub true_doa: Direction,
    pub estimated_doa: Direction,
    pub azimuth_error_deg: f64,
    pub elevation_error_deg: f64,
}

impl ReplayPair {
    pub fn new(timestamp: f64, true_doa: Direction, estimated_doa: Direction) -> Self {
        Self {
            timestamp,
            azimuth_error_deg: azimuth_error(estimated_doa.phi_deg(), true_doa.phi_deg()),
            elevation_error_deg: elevation_error(estimated_doa.theta_deg(), true_doa.theta_deg()),
            true_doa,
            estimated_doa,
        }
    }
}

/// Estimates the DoA of every steering-vector sample; pre-estimated samples pass through.
pub fn replay_track(track: &Track, estimator: Option<&Estimator>) -> Result<Vec<ReplayPair>> {
    if let (TrackMode::Steering { ports }, Some(est)) = (track.mode, estimator) {
        if est.port_count() != ports {
            return Err(Error::DimensionMismatch {
                expected: est.port_count(),
                actual: ports,
            });
        }
    }
    track
        .samples
        .par_iter()
        .map(|s| {
            let estimated = match &s.observation {
                Observation::Estimated(d) => *d,
                Observation::Steering(x) => {
                    let est = estimator.ok_or_else(|| {
                        Error::InvalidParameter(
                            "steering-vector track needs ports and a candidate grid".into(),
                        )
                    })?;
                    est.estimate(x)?.direction
                }
            };
            Ok(ReplayPair::new(s.timestamp, s.true_doa, estimated))
        })
        .collect()
}

/// Removes a common azimuth offset from every estimate.
///
/// The offset starts at the circular mean of the azimuth errors, which is
/// immune to wrap-around near ±180°, and is then refined by the arithmetic
/// mean of the re-centered errors so that the corrected errors average to zero.
/// Returns the corrected pairs and the offset that was removed.
pub fn apply_azimuth_offset(pairs: &[ReplayPair]) -> Result<(Vec<ReplayPair>, f64)> {
    if pairs.is_empty() {
        return Err(Error::Empty("no pairs to correct"));
    }
    let errors: Vec<f64> = pairs.iter().map(|p| p.azimuth_error_deg).collect();
    let centered = |offset: f64| -> Vec<f64> {
        errors
            .iter()
            .map(|e| azimuth_error(e - offset, 0.0))
            .collect()
    };
    // undefined mean direction: start from zero
    let mut offset = stats::circular_mean_deg(&errors).unwrap_or(0.0);
    let mut corrected = centered(offset);
    for _ in 0..8 {
        let m = stats::mean(&corrected).expect("non-empty");
        if m.abs() <= 1e-12 {
            break;
        }
        offset = azimuth_error(offset + m, 0.0);
        corrected = centered(offset);
    }
    if errors == corrected {
        return Ok((pairs.to_vec(), 0.0));
    }
    let out = pairs
        .iter()
        .zip(corrected)
        .map(|(p, err)| {
            let est = Direction::new(
                p.estimated_doa.theta_deg(),
                wrap_360(p.estimated_doa.phi_deg() - offset),
            )
            .expect("theta unchanged");
            let mut q = ReplayPair::new(p.timestamp, p.true_doa, est);
            // exact shift of the original error; re-deriving it from phi adds rounding
            q.azimuth_error_deg = err;
            q
        })
        .collect();
    Ok((out, offset))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleStats {
    pub rmse_deg: f64,
    /// Median of the absolute errors.
    pub median_abs_deg: f64,
}

impl AngleStats {
    fn of(errors: &[f64]) -> Option<Self> {
        Some(Self {
            rmse_deg: stats::rmse(errors).ok()?,
            median_abs_deg: stats::median_abs(errors)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilteredStats {
    pub samples: usize,
    pub azimuth_outlier_threshold_deg: f64,
    pub excluded: usize,
    pub excluded_fraction: f64,
    pub raw_elevation: AngleStats,
    pub raw_azimuth: AngleStats,
    /// Azimuth statistics without the excluded samples.
    pub filtered_azimuth: Option<AngleStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filtered_absent_reason: Option<String>,
}

/// Raw and outlier-filtered error statistics. A sample is excluded when its
/// absolute azimuth error exceeds `threshold_deg`.
pub fn filtered_stats(pairs: &[ReplayPair], threshold_deg: f64) -> Result<FilteredStats> {
    if pairs.is_empty() {
        return Err(Error::Empty("no pairs for statistics"));
    }
    if !(threshold_deg >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "outlier threshold must be non-negative, got {threshold_deg}"
        )));
    }
    let az: Vec<f64> = pairs.iter().map(|p| p.azimuth_error_deg).collect();
    let el: Vec<f64> = pairs.iter().map(|p| p.elevation_error_deg).collect();
    let kept: Vec<f64> = az
        .iter()
        .copied()
        .filter(|e| e.abs() <= threshold_deg)
        .collect();
    let excluded = az.len() - kept.len();
    let filtered_azimuth = AngleStats::of(&kept);
    Ok(FilteredStats {
        samples: pairs.len(),
        azimuth_outlier_threshold_deg: threshold_deg,
        excluded,
        excluded_fraction: excluded as f64 / pairs.len() as f64,
        raw_elevation: AngleStats::of(&el).expect("non-empty"),
        raw_azimuth: AngleStats::of(&az).expect("non-empty"),
        filtered_absent_reason: filtered_azimuth
            .is_none()
            .then(|| "all samples excluded".to_string()),
        filtered_azimuth,
    })
}

/// Box-plot summary with linear-interpolation quartiles and 1.5·IQR whiskers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxSummary {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme values inside the whisker fences.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

pub fn box_summary(values: &[f64]) -> Option<BoxSummary> {
    let v = stats::sorted(values);
    let q1 = stats::quantile_sorted(&v, 0.25)?;
    let median = stats::quantile_sorted(&v, 0.5)?;
    let q3 = stats::quantile_sorted(&v, 0.75)?;
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr);
    let inside = || {
        v.iter()
            .copied()
            .filter(|x| *x >= lo_fence && *x <= hi_fence)
    };
    Some(BoxSummary {
        count: v.len(),
        q1,
        median,
        q3,
        whisker_lo: inside().next().expect("quartiles lie inside the fences"),
        whisker_hi: inside()
            .next_back()
            .expect("quartiles lie inside the fences"),
        outliers: v
            .iter()
            .copied()
            .filter(|x| *x < lo_fence || *x > hi_fence)
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElevationBin {
    pub theta_lo_deg: f64,
    pub theta_hi_deg: f64,
    pub count: usize,
    pub azimuth: Option<BoxSummary>,
    pub elevation: Option<BoxSummary>,
}

/// `bin_width` spaced edges from 0° to 90°.
pub fn default_bin_edges(bin_width_deg: f64) -> Result<Vec<f64>> {
    let n = crate::patterns::exact_quotient(90.0, bin_width_deg).ok_or_else(|| {
        Error::InvalidParameter(format!("bin width {bin_width_deg}° must divide 90°"))
    })?;
    Ok((0..=n).map(|k| k as f64 * bin_width_deg).collect())
}

/// Groups errors by true theta. Bins are half-open `[lo, hi)` except the last,
/// which also takes `hi`. Samples outside the edges are ignored.
pub fn elevation_binned_boxplots(
    pairs: &[ReplayPair],
    edges_deg: &[f64],
) -> Result<Vec<ElevationBin>> {
    if edges_deg.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two bin edges".into(),
        ));
    }
    if edges_deg.windows(2).any(|w| !(w[1] > w[0]))
        || edges_deg[0] < 0.0
        || edges_deg[edges_deg.len() - 1] > 90.0
    {
        return Err(Error::InvalidParameter(
            "bin edges must ascend within [0°, 90°]".into(),
        ));
    }
    let last = edges_deg.len() - 2;
    Ok(edges_deg
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (lo, hi) = (w[0], w[1]);
            let members: Vec<&ReplayPair> = pairs
                .iter()
                .filter(|p| {
                    let t = p.true_doa.theta_deg();
                    t >= lo && (t < hi || (k == last && t == hi))
                })
                .collect();
            let az: Vec<f64> = members.iter().map(|p| p.azimuth_error_deg).collect();
            let el: Vec<f64> = members.iter().map(|p| p.elevation_error_deg).collect();
            ElevationBin {
                theta_lo_deg: lo,
                theta_hi_deg: hi,
                count: members.len(),
                azimuth: box_summary(&az),
                elevation: box_summary(&el),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackReport {
    pub azimuth_offset_deg: f64,
    pub stats: FilteredStats,
    pub bins: Vec<ElevationBin>,
    pub pairs: Vec<ReplayPair>,
}

/// Offset correction, filtered statistics and binned box plots in one pass.
pub fn build_report(
    pairs: &[ReplayPair],
    threshold_deg: f64,
    edges_deg: &[f64],
) -> Result<TrackReport> {
    let (corrected, offset) = apply_azimuth_offset(pairs)?;
    Ok(TrackReport {
        azimuth_offset_deg: offset,
        stats: filtered_stats(&corrected, threshold_deg)?,
        bins: elevation_binned_boxplots(&corrected, edges_deg)?,
        pairs: corrected,
    })
}

impl TrackReport {
    /// Writes `theta_lo_deg,theta_hi_deg,angle,count,q1,median,q3,whisker_lo,whisker_hi,outliers`;
    /// outliers are `;`-separated.
    pub fn write_bins_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}").map_err(|e| Error::io("<bins csv>", e))?;
        }
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "theta_lo_deg",
            "theta_hi_deg",
            "angle",
            "count",
            "q1",
            "median",
            "q3",
            "whisker_lo",
            "whisker_hi",
            "outliers",
        ])?;
        for bin in &self.bins {
            for (angle, summary) in [("azimuth", &bin.azimuth), ("elevation", &bin.elevation)] {
                let mut row = vec![
                    bin.theta_lo_deg.to_string(),
                    bin.theta_hi_deg.to_string(),
                    angle.to_string(),
                    bin.count.to_string(),
                ];
                match summary {
                    Some(b) => {
                        row.extend(
                            [b.q1, b.median, b.q3, b.whisker_lo, b.whisker_hi]
                                .map(|x| x.to_string()),
                        );
                        row.push(
                            b.outliers
                                .iter()
                                .map(f64::to_string)
                                .collect::<Vec<_>>()
                                .join(";"),
                        );
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 6)),
                }
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("<bins csv>", e))?;
        Ok(())
    }
}

fn parse_mode_line(line: &str) -> Result<TrackMode> {
    let body = line.trim_start_matches('#').trim();
    let mut mode = None;
    let mut ports = None;
    for part in body.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("bad track header field '{part}'")))?;
        match k.trim() {
            "mode" => mode = Some(v.trim().to_string()),
            "P" => {
                ports = Some(
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Malformed(format!("bad port count '{}'", v.trim())))?,
                )
            }
            other => {
                return Err(Error::Malformed(format!(
                    "unknown track header field '{other}'"
                )))
            }
        }
    }
    match (mode.as_deref(), ports) {
        (Some("estimated"), _) => Ok(TrackMode::Estimated),
        (Some("steering"), Some(p)) if p >= 2 => Ok(TrackMode::Steering { ports: p }),
        (Some("steering"), _) => Err(Error::Malformed(
            "steering track needs P=<n> with n >= 2".into(),
        )),
        (Some(m), _) => Err(Error::Malformed(format!("unknown track mode '{m}'"))),
        (None, _) => Err(Error::Malformed("track header lacks mode=".into())),
    }
}

fn expected_header(mode: TrackMode) -> Vec<String> {
    let mut h: Vec<String> = ["timestamp", "true_theta_deg", "true_phi_deg"]
        .map(String::from)
        .to_vec();
    match mode {
        TrackMode::Estimated => h.extend(["est_theta_deg", "est_phi_deg"].map(String::from)),
        TrackMode::Steering { ports } => {
            for k in 1..=ports {
                h.push(format!("re_x{k}"));
                h.push(format!("im_x{k}"));
            }
        }
    }
    h
}

/// Reads a track CSV. The first line must be the `#mode=...` declaration;
/// further `#` lines are ignored.
pub fn read_track_csv<R: Read>(reader: R) -> Result<Track> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io("<track csv>", e))?;
    if !first.trim_start().starts_with("#mode=") {
        return Err(Error::Malformed(
            "track file must start with a '#mode=estimated|steering,P=<n>' line".into(),
        ));
    }
    let mode = parse_mode_line(first.trim())?;

    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(String::from).collect();
    let expected = expected_header(mode);
    if header != expected {
        return Err(Error::Malformed(format!(
            "track header '{}' does not match expected '{}'",
            header.join(","),
            expected.join(",")
        )));
    }

    let mut samples = Vec::new();
    for (k, record) in csv.records().enumerate() {
        let record = record?;
        // header comment and column header precede the first record
        let line = record.position().map_or(k + 3, |p| p.line() as usize);
        let nums = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("line {line}: '{f}' is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample { line });
        }
        let true_doa = Direction::new(nums[1], nums[2])?;
        let observation = match mode {
            TrackMode::Estimated => Observation::Estimated(Direction::new(nums[3], nums[4])?),
            TrackMode::Steering { .. } => Observation::Steering(SteeringVector::new(
                nums[3..]
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            )),
        };
        samples.push(TrackSample {
            timestamp: nums[0],
            true_doa,
            observation,
        });
    }
    Track::new(mode, samples)
}

pub fn load_track_file(path: &Path) -> Result<Track> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_track_csv(f).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_track_csv<W: Write>(mut w: W, track: &Track) -> Result<()> {
    match track.mode {
        TrackMode::Estimated => writeln!(w, "#mode=estimated"),
        TrackMode::Steering { ports } => writeln!(w, "#mode=steering,P={ports}"),
    }
    .map_err(|e| Error::io("<track csv>", e))?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(expected_header(track.mode))?;
    for s in &track.samples {
        let mut row = vec![
            s.timestamp.to_string(),
            s.true_doa.theta_deg().to_string(),
            s.true_doa.phi_deg().to_string(),
        ];
        match &s.observation {
            Observation::Estimated(d) => {
                row.push(d.theta_deg().to_string());
                row.push(d.phi_deg().to_string());
            }
            Observation::Steering(x) => {
                for c in &x.entries {
                    row.push(c.re.to_string());
                    row.push(c.im.to_string());
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<track csv>", e))?;
    Ok(())
}
