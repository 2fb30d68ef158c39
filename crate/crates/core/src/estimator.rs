//! Steering vectors, noise injection and single-snapshot MUSIC.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DoaGrid;
use crate::linalg::{self, hermitian_eigen, CMatrix};
use crate::patterns::{Direction, PortSet};

/// Denominator floor of the MUSIC spectrum.
pub const SPECTRUM_FLOOR: f64 = 1e-12;

/// Steering vectors with a smaller norm are treated as vanishing.
pub const VANISHING_NORM: f64 = 1e-12;

/// Relative tolerance for spectrum values counted as tied with the peak.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    pub entries: Vec<Complex64>,
    pub source: Option<Direction>,
    pub noisy: bool,
}

impl SteeringVector {
    pub fn new(entries: Vec<Complex64>) -> Self {
        Self {
            entries,
            source: None,
            noisy: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.entries)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            entries: self.entries.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Unit-norm copy; metadata preserved.
    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > VANISHING_NORM) || !n.is_finite() {
            return Err(Error::VanishingSteeringVector);
        }
        Ok(Self {
            entries: self.entries.iter().map(|v| v / n).collect(),
            ..self.clone()
        })
    }
}

/// Port responses to a Θ-polarized plane wave from `d` (not normalized).
pub fn steering_vector(ports: &PortSet, d: &Direction) -> Result<SteeringVector> {
    let entries = ports
        .patterns()
        .iter()
        .map(|p| p.evaluate(d).map(|v| v.e_theta))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringVector {
        entries,
        source: Some(*d),
        noisy: false,
    })
}

/// Signal power the SNR is referred to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrReference {
    /// Mean per-port signal power `‖x‖²/P`.
    #[default]
    PerPort,
    /// Total signal power `‖x‖²` over all ports.
    Total,
}

impl std::str::FromStr for SnrReference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-port" => Ok(Self::PerPort),
            "total" => Ok(Self::Total),
            other => Err(Error::InvalidParameter(format!(
                "unknown SNR reference '{other}' (expected per-port or total)"
            ))),
        }
    }
}

/// Per-entry noise variance `σ² = (‖x‖²/P)·10^(−snr/10)`.
pub fn noise_variance(x: &SteeringVector, snr_db: f64) -> f64 {
    noise_variance_with(x, snr_db, SnrReference::PerPort)
}

pub fn noise_variance_with(x: &SteeringVector, snr_db: f64, reference: SnrReference) -> f64 {
    let signal = match reference {
        SnrReference::PerPort => x.norm().powi(2) / x.len().max(1) as f64,
        SnrReference::Total => x.norm().powi(2),
    };
    signal * 10f64.powf(-snr_db / 10.0)
}

/// Adds circularly-symmetric complex Gaussian noise drawn from `rng`.
pub fn add_noise_with<R: Rng + ?Sized>(
    x: &SteeringVector,
    snr_db: f64,
    reference: SnrReference,
    rng: &mut R,
) -> SteeringVector {
    let sigma = (noise_variance_with(x, snr_db, reference) / 2.0).sqrt();
    let entries = x
        .entries
        .iter()
        .map(|v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            v + Complex64::new(re, im) * sigma
        })
        .collect();
    SteeringVector {
        entries,
        source: x.source,
        noisy: true,
    }
}

/// Seeded variant of [`add_noise_with`]; equal seeds give equal draws.
pub fn add_noise(x: &SteeringVector, snr_db: f64, seed: u64) -> SteeringVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_with(x, snr_db, SnrReference::PerPort, &mut rng)
}

/// Rank-1 sample covariance `x̃·x̃ᴴ`.
pub fn covariance(x: &SteeringVector) -> CMatrix {
    CMatrix::outer(&x.entries, &x.entries)
}

/// Averaged covariance over several snapshots.
pub fn covariance_from_snapshots(snapshots: &[SteeringVector]) -> Result<CMatrix> {
    let first = snapshots.first().ok_or(Error::Empty("no snapshots"))?;
    let mut acc = CMatrix::zeros(first.len(), first.len());
    for s in snapshots {
        if s.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                actual: s.len(),
            });
        }
        acc = acc.add(&covariance(s));
    }
    Ok(acc.scale(Complex64::new(1.0 / snapshots.len() as f64, 0.0)))
}

/// Split of the covariance eigenvectors into signal and noise subspaces.
#[derive(Clone, Debug)]
pub struct NoiseSubspace {
    /// P×(P−1), orthonormal columns.
    pub basis: CMatrix,
    /// Unit eigenvector of the largest eigenvalue.
    pub signal: Vec<Complex64>,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Conjugated basis columns, cached for spectrum evaluation.
    conj_columns: Vec<Vec<Complex64>>,
}

impl NoiseSubspace {
    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    /// `xᴴ·N·Nᴴ·x`
    pub fn projection_energy(&self, x: &[Complex64]) -> f64 {
        self.conj_columns
            .iter()
            .map(|col| {
                col.iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum()
    }
}

pub fn noise_subspace(r: &CMatrix) -> Result<NoiseSubspace> {
    let n = r.rows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "covariance must be at least 2x2, got {n}x{}",
            r.cols()
        )));
    }
    let eig = hermitian_eigen(r)?;
    let signal = eig.vectors.column(0);
    let columns: Vec<Vec<Complex64>> = (1..n).map(|j| eig.vectors.column(j)).collect();
    let conj_columns = columns
        .iter()
        .map(|c| c.iter().map(|v| v.conj()).collect())
        .collect();
    Ok(NoiseSubspace {
        basis: CMatrix::from_columns(&columns),
        signal,
        eigenvalues: eig.values,
        conj_columns,
    })
}

/// MUSIC pseudo-spectrum values, aligned with the grid indices they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct MusicSpectrum {
    pub grid_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl MusicSpectrum {
    /// Writes `index,theta_deg,phi_deg,p_music`.
    pub fn write_csv<W: Write>(&self, grid: &DoaGrid, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "theta_deg", "phi_deg", "p_music"])?;
        for (&k, v) in self.grid_indices.iter().zip(&self.values) {
            let d = grid.directions()[k];
            w.write_record(&[
                k.to_string(),
                d.theta_deg().to_string(),
                d.phi_deg().to_string(),
                v.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<spectrum csv>", e))?;
        Ok(())
    }
}

/// `P_k = 1 / max(x_kᴴ·N·Nᴴ·x_k, ε)` for normalized candidates.
pub fn music_spectrum(noise: &NoiseSubspace, candidates: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|x| {
            if x.len() != noise.dim() {
                return Err(Error::DimensionMismatch {
                    expected: noise.dim(),
                    actual: x.len(),
                });
            }
            Ok(1.0 / noise.projection_energy(x).max(SPECTRUM_FLOOR))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub grid_index: usize,
    pub direction: Direction,
    pub peak_value: f64,
    /// The peak is attained at two or more distinct theta values.
    pub elevation_unidentifiable: bool,
}

/// Grid-search MUSIC estimator with precomputed normalized candidates.
#[derive(Clone, Debug)]
pub struct Estimator {
    grid: DoaGrid,
    port_count: usize,
    grid_indices: Vec<usize>,
    candidates: Vec<Vec<Complex64>>,
}

impl Estimator {
    /// Vanishing candidate steering vectors are skipped (see [`Self::skipped`]).
    pub fn new(ports: &PortSet, grid: &DoaGrid) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Empty("candidate grid"));
        }
        let mut grid_indices = Vec::with_capacity(grid.len());
        let mut candidates = Vec::with_capacity(grid.len());
        for (k, d) in grid.directions().iter().enumerate() {
            match steering_vector(ports, d)?.normalize() {
                Ok(x) => {
                    grid_indices.push(k);
                    candidates.push(x.entries);
                }
                Err(Error::VanishingSteeringVector) => {}
                Err(e) => return Err(e),
            }
        }
        if candidates.is_empty() {
            return Err(Error::AllCandidatesVanish);
        }
        Ok(Self {
            grid: grid.clone(),
            port_count: ports.len(),
            grid_indices,
            candidates,
        })
    }

    pub fn grid(&self) -> &DoaGrid {
        &self.grid
    }

    pub fn port_count(&self) -> usize {
        self.port_count
    }

    /// Number of grid points whose steering vector vanishes.
    pub fn skipped(&self) -> usize {
        self.grid.len() - self.candidates.len()
    }

    pub fn spectrum_from_subspace(&self, noise: &NoiseSubspace) -> Result<MusicSpectrum> {
        Ok(MusicSpectrum {
            grid_indices: self.grid_indices.clone(),
            values: music_spectrum(noise, &self.candidates)?,
        })
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.port_count {
            return Err(Error::DimensionMismatch {
                expected: self.port_count,
                actual: n,
            });
        }
        Ok(())
    }

    /// Estimates the DoA from one or more snapshots.
    pub fn estimate_snapshots(
        &self,
        snapshots: &[SteeringVector],
    ) -> Result<(Estimate, MusicSpectrum)> {
        for s in snapshots {
            self.check_len(s.len())?;
        }
        let r = covariance_from_snapshots(snapshots)?;
        let noise = noise_subspace(&r)?;
        let spectrum = self.spectrum_from_subspace(&noise)?;
        let est = self.pick_peak(&spectrum);
        Ok((est, spectrum))
    }

    pub fn estimate_with_spectrum(&self, x: &SteeringVector) -> Result<(Estimate, MusicSpectrum)> {
        self.estimate_snapshots(std::slice::from_ref(x))
    }

    pub fn estimate(&self, x: &SteeringVector) -> Result<Estimate> {
        self.estimate_with_spectrum(x).map(|(e, _)| e)
    }

    /// Maximum of the spectrum; ties go to the lowest grid index.
    fn pick_peak(&self, spectrum: &MusicSpectrum) -> Estimate {
        let mut best = 0;
        for (k, v) in spectrum.values.iter().enumerate() {
            if *v > spectrum.values[best] {
                best = k;
            }
        }
        let peak = spectrum.values[best];
        let grid_index = spectrum.grid_indices[best];
        let direction = self.grid.directions()[grid_index];
        let threshold = peak * (1.0 - TIE_TOLERANCE);
        let elevation_unidentifiable =
            spectrum
                .values
                .iter()
                .zip(&spectrum.grid_indices)
                .any(|(v, &k)| {
                    *v >= threshold
                        && (self.grid.directions()[k].theta_deg() - direction.theta_deg()).abs()
                            > 1e-9
                });
        Estimate {
            grid_index,
            direction,
            peak_value: peak,
            elevation_unidentifiable,
        }
    }
}

/// One-shot grid search: builds the candidate set and returns the peak
/// direction with the full spectrum.
pub fn estimate_doa(
    ports: &PortSet,
    x: &SteeringVector,
    grid: &DoaGrid,
) -> Result<(Direction, MusicSpectrum)> {
    let estimator = Estimator::new(ports, grid)?;
    let (est, spectrum) = estimator.estimate_with_spectrum(x)?;
    Ok((est.direction, spectrum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{equiangular_grid, hemisphere_grid};
    use crate::patterns::{cupola_port_set, fourier_port_set, monopole_pattern, PortSet};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dir(t: f64, p: f64) -> Direction {
        Direction::new(t, p).unwrap()
    }

    fn approx_vec(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn fourier_steering_examples() {
        let ports = fourier_port_set(3).unwrap();
        let x = steering_vector(&ports, &dir(45.0, 0.0)).unwrap();
        assert!(approx_vec(&x.entries, &[c(1.0, 0.0); 3], 1e-15));
        let x = steering_vector(&ports, &dir(45.0, 90.0)).unwrap();
        assert!(approx_vec(
            &x.entries,
            &[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)],
            1e-12
        ));
    }

    #[test]
    fn monopole_zenith_entry_is_zero() {
        let ports = PortSet::new(
            vec![monopole_pattern(), crate::patterns::fourier_pattern(1)],
            vec!["m".into(), "f".into()],
        )
        .unwrap();
        let x = steering_vector(&ports, &dir(0.0, 77.0)).unwrap();
        assert_eq!(x.entries[0], c(0.0, 0.0));
    }

    #[test]
    fn normalize_examples() {
        let x = SteeringVector::new(vec![c(1.0, 0.0); 3])
            .normalize()
            .unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!(approx_vec(&x.entries, &[c(s, 0.0); 3], 1e-15));
        let err = SteeringVector::new(vec![c(0.0, 0.0); 3])
            .normalize()
            .unwrap_err();
        assert_eq!(err.to_string(), "steering vector vanishes at this DoA");
        let x = SteeringVector::new(vec![c(0.0, 2.0), c(0.0, 0.0), c(0.0, 0.0)])
            .normalize()
            .unwrap();
        assert_eq!(x.entries, vec![c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let mut src = SteeringVector::new(vec![c(3.0, 0.0), c(4.0, 0.0)]);
        src.source = Some(dir(10.0, 20.0));
        assert_eq!(src.normalize().unwrap().source, src.source);
    }

    #[test]
    fn noise_examples() {
        let x = SteeringVector::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)]);
        let y = add_noise(&x, 300.0, 1);
        assert!(y.noisy);
        let rel = linalg::norm(
            &x.entries
                .iter()
                .zip(&y.entries)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        ) / x.norm();
        assert!(rel < 1e-10);
        assert!((noise_variance(&x, 0.0) - 1.0).abs() < 1e-15);
        assert!((noise_variance_with(&x, 0.0, SnrReference::Total) - 3.0).abs() < 1e-15);
        assert_eq!(
            "total".parse::<SnrReference>().unwrap(),
            SnrReference::Total
        );
        assert!("peak".parse::<SnrReference>().is_err());
        assert_eq!(add_noise(&x, -10.0, 9), add_noise(&x, -10.0, 9));
        assert_ne!(add_noise(&x, -10.0, 9), add_noise(&x, -10.0, 10));
    }

    #[test]
    fn noise_variance_law_of_large_numbers() {
        let x = SteeringVector::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)]);
        let sigma2 = noise_variance(&x, -10.0);
        assert!((sigma2 - 10.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let y = add_noise_with(&x, -10.0, SnrReference::PerPort, &mut rng);
            acc += x
                .entries
                .iter()
                .zip(&y.entries)
                .map(|(a, b)| (b - a).norm_sqr())
                .sum::<f64>();
        }
        let sample = acc / (draws * x.len()) as f64;
        assert!(
            (sample / sigma2 - 1.0).abs() < 0.05,
            "sample variance {sample}"
        );
    }

    #[test]
    fn covariance_examples() {
        let r = covariance(&SteeringVector::new(vec![
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
        ]));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == 0 && j == 0 { 1.0 } else { 0.0 };
                assert_eq!(r[(i, j)], c(want, 0.0));
            }
        }
        let s = 1.0 / 2f64.sqrt();
        let r = covariance(&SteeringVector::new(vec![c(s, 0.0), c(0.0, s)]));
        let want = [[c(0.5, 0.0), c(0.0, -0.5)], [c(0.0, 0.5), c(0.5, 0.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - want[i][j]).norm() < 1e-15);
            }
        }
        let x = SteeringVector::new(vec![c(0.3, -1.2), c(2.0, 0.5), c(-0.7, 0.1)]);
        assert!((covariance(&x).trace().re - x.norm().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn canonical_noise_subspace() {
        let x = SteeringVector::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let n = noise_subspace(&covariance(&x)).unwrap();
        assert_eq!(n.basis.cols(), 2);
        let proj = n.basis.conj_transpose().mul_vec(&x.entries);
        assert!(proj.iter().all(|v| v.norm() < 1e-15));
        assert!(n.eigenvalues[1..].iter().all(|v| v.abs() < 1e-10));
        assert!((n.eigenvalues[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_examples() {
        let x = SteeringVector::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)])
            .normalize()
            .unwrap();
        let n = noise_subspace(&covariance(&x)).unwrap();
        let v = music_spectrum(&n, std::slice::from_ref(&x.entries)).unwrap();
        assert_eq!(v[0], 1.0 / SPECTRUM_FLOOR);

        // orthogonal to the signal eigenvector
        let s = 1.0 / 2f64.sqrt();
        let ortho = vec![c(s, 0.0), c(0.0, 0.0), c(s, 0.0)];
        assert!(linalg::inner(&x.entries, &ortho).norm() < 1e-15);
        let v = music_spectrum(&n, &[ortho]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);

        assert!(music_spectrum(&n, &[vec![c(1.0, 0.0); 2]]).is_err());
    }

    #[test]
    fn noise_free_grid_member_is_recovered() {
        let ports = cupola_port_set();
        let grid = hemisphere_grid(341).unwrap();
        let est = Estimator::new(&ports, &grid).unwrap();
        assert_eq!(est.skipped(), 0);
        for k in [0, 17, 100, 340] {
            let x = steering_vector(&ports, &grid.directions()[k]).unwrap();
            let e = est.estimate(&x).unwrap();
            assert_eq!(e.grid_index, k);
            assert!(!e.elevation_unidentifiable);
            let e2 = est.estimate(&x.scaled(c(-0.3, 2.1))).unwrap();
            assert_eq!(e2.grid_index, k);
        }
    }

    #[test]
    fn fourier_theta_columns_tie() {
        let ports = fourier_port_set(3).unwrap();
        let grid = equiangular_grid(15.0).unwrap();
        let est = Estimator::new(&ports, &grid).unwrap();
        let x = add_noise(&steering_vector(&ports, &dir(40.0, 100.0)).unwrap(), 0.0, 3);
        let (e, spectrum) = est.estimate_with_spectrum(&x).unwrap();
        assert!(e.elevation_unidentifiable);
        let dirs = grid.directions();
        for (a, va) in spectrum.grid_indices.iter().zip(&spectrum.values) {
            for (b, vb) in spectrum.grid_indices.iter().zip(&spectrum.values) {
                if dirs[*a].phi_deg() == dirs[*b].phi_deg() {
                    assert!((va - vb).abs() <= 1e-9 * va.abs());
                }
            }
        }
        // lowest index wins within the tied column
        let tied_min = spectrum
            .grid_indices
            .iter()
            .zip(&spectrum.values)
            .filter(|(_, v)| **v == e.peak_value)
            .map(|(k, _)| *k)
            .min()
            .unwrap();
        assert_eq!(e.grid_index, tied_min);
    }

    #[test]
    fn vanishing_candidates_are_skipped() {
        let ports = PortSet::new(
            vec![monopole_pattern(), monopole_pattern()],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let grid = equiangular_grid(30.0).unwrap();
        let est = Estimator::new(&ports, &grid).unwrap();
        assert_eq!(est.skipped(), 1);
        let only_pole = DoaGrid::from_directions(vec![dir(0.0, 0.0)]).unwrap();
        assert!(matches!(
            Estimator::new(&ports, &only_pole),
            Err(Error::AllCandidatesVanish)
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let ports = fourier_port_set(3).unwrap();
        let grid = equiangular_grid(30.0).unwrap();
        let est = Estimator::new(&ports, &grid).unwrap();
        let x = SteeringVector::new(vec![c(1.0, 0.0); 4]);
        assert!(matches!(
            est.estimate(&x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn multi_snapshot_average() {
        let a = SteeringVector::new(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let b = SteeringVector::new(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let r = covariance_from_snapshots(&[a, b]).unwrap();
        assert_eq!(r[(0, 0)], c(0.5, 0.0));
        assert_eq!(r[(1, 1)], c(0.5, 0.0));
        assert!(covariance_from_snapshots(&[]).is_err());
    }

    #[test]
    fn estimate_doa_convenience() {
        let ports = fourier_port_set(3).unwrap();
        let grid = equiangular_grid(10.0).unwrap();
        let x = steering_vector(&ports, &dir(90.0, 120.0)).unwrap();
        let (d, spectrum) = estimate_doa(&ports, &x, &grid).unwrap();
        assert_eq!(d.phi_deg(), 120.0);
        assert_eq!(spectrum.values.len(), grid.len());
        let mut buf = Vec::new();
        spectrum.write_csv(&grid, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("index,theta_deg,phi_deg,p_music\n"));
    }
}
