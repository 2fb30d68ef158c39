//! Far-field patterns of antenna ports and characteristic modes.
//!
//! Angles are degrees at every public interface and radians internally.
//! Analytic patterns are peak-normalized to 1; sampled patterns are stored on
//! a regular (theta, phi) lattice that wraps around in azimuth.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEG: f64 = PI / 180.0;

/// Tolerance used when snapping coordinates onto lattice nodes.
const NODE_TOL: f64 = 1e-9;

/// A direction of arrival: polar angle from zenith and azimuth, in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    theta_deg: f64,
    phi_deg: f64,
}

impl Direction {
    /// Validates `theta ∈ [0, 180]` and wraps `phi` into `[0, 360)`.
    pub fn new(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        if !theta_deg.is_finite() || !phi_deg.is_finite() {
            return Err(Error::InvalidDirection(format!(
                "non-finite angle (theta={theta_deg}, phi={phi_deg})"
            )));
        }
        if !(0.0..=180.0).contains(&theta_deg) {
            return Err(Error::InvalidDirection(format!(
                "theta={theta_deg}° outside [0°, 180°]"
            )));
        }
        Ok(Self {
            theta_deg,
            phi_deg: wrap_360(phi_deg),
        })
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi_deg
    }

    pub fn theta_rad(&self) -> f64 {
        self.theta_deg * DEG
    }

    pub fn phi_rad(&self) -> f64 {
        self.phi_deg * DEG
    }

    /// Cartesian unit vector with +z at zenith.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta_rad().sin_cos();
        let (sp, cp) = self.phi_rad().sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Wraps an azimuth into `[0, 360)`.
pub fn wrap_360(phi_deg: f64) -> f64 {
    let w = phi_deg.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Complex far-field components at one direction.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FieldValue {
    pub e_theta: Complex64,
    pub e_phi: Complex64,
}

impl FieldValue {
    pub fn new(e_theta: Complex64, e_phi: Complex64) -> Self {
        Self { e_theta, e_phi }
    }

    fn scale(self, w: f64) -> Self {
        Self {
            e_theta: self.e_theta * w,
            e_phi: self.e_phi * w,
        }
    }

    fn add(self, other: Self) -> Self {
        Self {
            e_theta: self.e_theta + other.e_theta,
            e_phi: self.e_phi + other.e_phi,
        }
    }
}

/// Regular sampling lattice. Azimuth always covers the full circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub theta_start_deg: f64,
    pub theta_step_deg: f64,
    pub theta_count: usize,
    pub phi_start_deg: f64,
    pub phi_step_deg: f64,
    pub phi_count: usize,
}

impl Lattice {
    /// Lattice with equal steps in theta and phi, theta from 0 to `theta_max_deg`.
    pub fn regular(step_deg: f64, theta_max_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0) || !step_deg.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lattice step must be positive, got {step_deg}"
            )));
        }
        if !(theta_max_deg > 0.0 && theta_max_deg <= 180.0) {
            return Err(Error::InvalidParameter(format!(
                "theta_max must lie in (0°, 180°], got {theta_max_deg}"
            )));
        }
        let theta_steps = exact_quotient(theta_max_deg, step_deg).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "step {step_deg}° does not divide theta range {theta_max_deg}°"
            ))
        })?;
        let phi_count = exact_quotient(360.0, step_deg).ok_or_else(|| {
            Error::InvalidParameter(format!("step {step_deg}° does not divide 360°"))
        })?;
        let lattice = Self {
            theta_start_deg: 0.0,
            theta_step_deg: step_deg,
            theta_count: theta_steps + 1,
            phi_start_deg: 0.0,
            phi_step_deg: step_deg,
            phi_count,
        };
        lattice.validate()?;
        Ok(lattice)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_count < 2 || self.phi_count < 2 {
            return Err(Error::IncompleteLattice(format!(
                "need at least 2 theta and 2 phi samples, got {}x{}",
                self.theta_count, self.phi_count
            )));
        }
        if !(self.theta_step_deg > 0.0) || !(self.phi_step_deg > 0.0) {
            return Err(Error::Malformed(
                "inconsistent steps: non-positive step".into(),
            ));
        }
        let theta_end = self.theta_end_deg();
        if self.theta_start_deg < -NODE_TOL || theta_end > 180.0 + NODE_TOL {
            return Err(Error::Malformed(format!(
                "theta lattice [{}, {}] outside [0, 180]",
                self.theta_start_deg, theta_end
            )));
        }
        let span = self.phi_step_deg * self.phi_count as f64;
        if (span - 360.0).abs() > 1e-6 {
            return Err(Error::Malformed(format!(
                "inconsistent steps: azimuth lattice spans {span}° instead of 360°"
            )));
        }
        Ok(())
    }

    pub fn theta_end_deg(&self) -> f64 {
        self.theta_start_deg + self.theta_step_deg * (self.theta_count - 1) as f64
    }

    pub fn theta_at(&self, i: usize) -> f64 {
        self.theta_start_deg + self.theta_step_deg * i as f64
    }

    pub fn phi_at(&self, j: usize) -> f64 {
        self.phi_start_deg + self.phi_step_deg * j as f64
    }

    pub fn len(&self) -> usize {
        self.theta_count * self.phi_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_as(&self, other: &Lattice) -> bool {
        self.theta_count == other.theta_count
            && self.phi_count == other.phi_count
            && (self.theta_start_deg - other.theta_start_deg).abs() < NODE_TOL
            && (self.theta_step_deg - other.theta_step_deg).abs() < NODE_TOL
            && (self.phi_start_deg - other.phi_start_deg).abs() < NODE_TOL
            && (self.phi_step_deg - other.phi_step_deg).abs() < NODE_TOL
    }
}

/// Returns `a / b` when it is (numerically) a positive integer.
pub(crate) fn exact_quotient(a: f64, b: f64) -> Option<usize> {
    let q = a / b;
    let r = q.round();
    if r >= 1.0 && (q - r).abs() < 1e-9 {
        Some(r as usize)
    } else {
        None
    }
}

/// Far-field samples on a complete lattice, row-major in theta.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPattern {
    lattice: Lattice,
    values: Vec<FieldValue>,
}

impl SampledPattern {
    pub fn new(lattice: Lattice, values: Vec<FieldValue>) -> Result<Self> {
        lattice.validate()?;
        if values.len() != lattice.len() {
            return Err(Error::IncompleteLattice(format!(
                "expected {} samples, got {}",
                lattice.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| {
            !(v.e_theta.re.is_finite()
                && v.e_theta.im.is_finite()
                && v.e_phi.re.is_finite()
                && v.e_phi.im.is_finite())
        }) {
            return Err(Error::Malformed("non-finite sample".into()));
        }
        Ok(Self { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn node(&self, i: usize, j: usize) -> FieldValue {
        self.values[i * self.lattice.phi_count + j]
    }

    /// Bilinear interpolation with azimuth wrap-around.
    fn interpolate(&self, d: &Direction) -> Result<FieldValue> {
        let l = &self.lattice;
        let mut t = (d.theta_deg() - l.theta_start_deg) / l.theta_step_deg;
        let t_max = (l.theta_count - 1) as f64;
        if t < -NODE_TOL || t > t_max + NODE_TOL {
            return Err(Error::OutOfRange {
                theta_deg: d.theta_deg(),
                min_deg: l.theta_start_deg,
                max_deg: l.theta_end_deg(),
            });
        }
        if (t - t.round()).abs() < NODE_TOL {
            t = t.round();
        }
        t = t.clamp(0.0, t_max);
        let i0 = (t.floor() as usize).min(l.theta_count - 2);
        let wt = t - i0 as f64;

        let n_phi = l.phi_count as f64;
        let mut u = wrap_360(d.phi_deg() - l.phi_start_deg) / l.phi_step_deg;
        if (u - u.round()).abs() < NODE_TOL {
            u = u.round();
        }
        if u >= n_phi {
            u -= n_phi;
        }
        let j0 = (u.floor() as usize).min(l.phi_count - 1);
        let j1 = (j0 + 1) % l.phi_count;
        let wp = u - j0 as f64;

        let lower = self
            .node(i0, j0)
            .scale(1.0 - wp)
            .add(self.node(i0, j1).scale(wp));
        let upper = self
            .node(i0 + 1, j0)
            .scale(1.0 - wp)
            .add(self.node(i0 + 1, j1).scale(wp));
        Ok(lower.scale(1.0 - wt).add(upper.scale(wt)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatternKind {
    /// `E_theta = exp(j·p·phi)`, `E_phi = 0`.
    Fourier {
        order: u32,
    },
    /// Electric monopole over ground: `E_theta = sin(theta)`.
    Monopole,
    /// Horizontal magnetic dipole. `axis` is the in-plane direction of the
    /// main Θ-polarized lobe; the magnetic moment is `axis × z`.
    MagneticDipole {
        axis: [f64; 3],
    },
    Sampled(SampledPattern),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldPattern {
    kind: PatternKind,
    /// Metadata only.
    pub frequency_mhz: Option<f64>,
}

impl FarFieldPattern {
    pub fn kind(&self) -> &PatternKind {
        &self.kind
    }

    pub fn sampled(pattern: SampledPattern) -> Self {
        Self {
            kind: PatternKind::Sampled(pattern),
            frequency_mhz: None,
        }
    }

    pub fn as_sampled(&self) -> Option<&SampledPattern> {
        match &self.kind {
            PatternKind::Sampled(s) => Some(s),
            _ => None,
        }
    }

    /// Far-field components at `d`: closed form for analytic kinds,
    /// bilinear interpolation for sampled ones.
    pub fn evaluate(&self, d: &Direction) -> Result<FieldValue> {
        let zero = Complex64::new(0.0, 0.0);
        match &self.kind {
            PatternKind::Fourier { order } => Ok(FieldValue::new(
                Complex64::from_polar(1.0, f64::from(*order) * d.phi_rad()),
                zero,
            )),
            PatternKind::Monopole => Ok(FieldValue::new(
                Complex64::new(d.theta_rad().sin(), 0.0),
                zero,
            )),
            PatternKind::MagneticDipole { axis } => {
                let (sp, cp) = d.phi_rad().sin_cos();
                let ct = d.theta_rad().cos();
                // E ∝ r̂ × m with m = axis × ẑ = (a_y, -a_x, 0)
                let e_theta = axis[0] * cp + axis[1] * sp;
                let e_phi = ct * (axis[1] * cp - axis[0] * sp);
                Ok(FieldValue::new(
                    Complex64::new(e_theta, 0.0),
                    Complex64::new(e_phi, 0.0),
                ))
            }
            PatternKind::Sampled(s) => s.interpolate(d),
        }
    }

    /// Samples this pattern on `lattice`.
    pub fn sample_on(&self, lattice: &Lattice) -> Result<SampledPattern> {
        let mut values = Vec::with_capacity(lattice.len());
        for i in 0..lattice.theta_count {
            for j in 0..lattice.phi_count {
                let d = Direction::new(lattice.theta_at(i).clamp(0.0, 180.0), lattice.phi_at(j))?;
                values.push(self.evaluate(&d)?);
            }
        }
        SampledPattern::new(*lattice, values)
    }
}

/// Idealized Fourier-series port pattern of order `p`.
pub fn fourier_pattern(p: u32) -> FarFieldPattern {
    FarFieldPattern {
        kind: PatternKind::Fourier { order: p },
        frequency_mhz: None,
    }
}

pub fn monopole_pattern() -> FarFieldPattern {
    FarFieldPattern {
        kind: PatternKind::Monopole,
        frequency_mhz: None,
    }
}

/// Magnetic dipole whose Θ-polarized lobe points along `axis`, which must be
/// a unit vector in the ground plane.
pub fn magnetic_dipole_pattern(axis: [f64; 3]) -> Result<FarFieldPattern> {
    let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "magnetic dipole axis must have unit norm, got {norm}"
        )));
    }
    if axis[2].abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "magnetic dipole axis must lie in the ground plane (z = 0)".into(),
        ));
    }
    Ok(FarFieldPattern {
        kind: PatternKind::MagneticDipole { axis },
        frequency_mhz: None,
    })
}

/// Ordered far-fields of the `P` antenna ports.
#[derive(Clone, Debug, PartialEq)]
pub struct PortSet {
    patterns: Vec<FarFieldPattern>,
    labels: Vec<String>,
}

impl PortSet {
    pub fn new(patterns: Vec<FarFieldPattern>, labels: Vec<String>) -> Result<Self> {
        if patterns.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a port set needs at least 2 ports, got {}",
                patterns.len()
            )));
        }
        if labels.len() != patterns.len() {
            return Err(Error::DimensionMismatch {
                expected: patterns.len(),
                actual: labels.len(),
            });
        }
        let mut lattices = patterns
            .iter()
            .filter_map(|p| p.as_sampled())
            .map(|s| s.lattice());
        if let Some(first) = lattices.next() {
            if lattices.any(|l| !l.same_as(first)) {
                return Err(Error::Malformed(
                    "sampled ports do not share an identical lattice".into(),
                ));
            }
        }
        Ok(Self { patterns, labels })
    }

    /// Number of ports `P`.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[FarFieldPattern] {
        &self.patterns
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Converts every port to a sampled pattern on `lattice`.
    pub fn sample_on(&self, lattice: &Lattice) -> Result<PortSet> {
        let patterns = self
            .patterns
            .iter()
            .map(|p| {
                let mut sampled = FarFieldPattern::sampled(p.sample_on(lattice)?);
                sampled.frequency_mhz = p.frequency_mhz;
                Ok(sampled)
            })
            .collect::<Result<Vec<_>>>()?;
        PortSet::new(patterns, self.labels.clone())
    }
}

/// Fourier port set with orders `0..P`.
pub fn fourier_port_set(port_count: usize) -> Result<PortSet> {
    if port_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "fourier port set needs P >= 2, got {port_count}"
        )));
    }
    let patterns = (0..port_count as u32).map(fourier_pattern).collect();
    let labels = (0..port_count).map(|p| format!("fourier{p}")).collect();
    PortSet::new(patterns, labels)
}

/// Analytic stand-in for the cupola antenna: an electric monopole and two
/// orthogonal, degenerate magnetic dipoles.
pub fn cupola_port_set() -> PortSet {
    let patterns = vec![
        monopole_pattern(),
        magnetic_dipole_pattern([1.0, 0.0, 0.0]).expect("unit axis"),
        magnetic_dipole_pattern([0.0, 1.0, 0.0]).expect("unit axis"),
    ];
    let labels = vec!["monopole".into(), "dipole_x".into(), "dipole_y".into()];
    PortSet::new(patterns, labels).expect("three ports")
}

/// Parses a short analytic pattern description: `fourier:<p>`, `monopole`,
/// `magnetic-dipole:x|y|<deg>` (azimuth of the lobe axis).
pub fn parse_analytic_pattern(spec: &str) -> Result<FarFieldPattern> {
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    match (kind, arg) {
        ("fourier", Some(p)) => p
            .parse::<u32>()
            .map(fourier_pattern)
            .map_err(|_| Error::InvalidParameter(format!("invalid fourier order '{p}'"))),
        ("monopole", None) => Ok(monopole_pattern()),
        ("magnetic-dipole", Some(axis)) => {
            let az = match axis {
                "x" => 0.0,
                "y" => 90.0,
                other => other.parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("invalid dipole axis '{other}'"))
                })?,
            };
            let (s, c) = (az * DEG).sin_cos();
            magnetic_dipole_pattern([c, s, 0.0])
        }
        _ => Err(Error::InvalidParameter(format!(
            "unknown analytic pattern '{spec}'"
        ))),
    }
}

/// Parses a port-set description: `fourier:<P>`, `cupola-analytic`,
/// `file:<path>`, or analytic patterns joined with `+`
/// (e.g. `monopole+magnetic-dipole:x`).
pub fn parse_port_spec(spec: &str) -> Result<PortSet> {
    let spec = spec.trim();
    if let Some(path) = spec.strip_prefix("file:") {
        return load_pattern_file(Path::new(path), None);
    }
    if spec == "cupola-analytic" {
        return Ok(cupola_port_set());
    }
    if let Some(n) = spec.strip_prefix("fourier:") {
        if let Ok(n) = n.trim().parse::<usize>() {
            return fourier_port_set(n);
        }
    }
    let parts: Vec<&str> = spec.split('+').collect();
    let patterns = parts
        .iter()
        .map(|p| parse_analytic_pattern(p))
        .collect::<Result<Vec<_>>>()?;
    let labels = parts.iter().map(|p| p.trim().to_string()).collect();
    PortSet::new(patterns, labels)
}

const PATTERN_HEADER: [&str; 7] = [
    "port",
    "theta_deg",
    "phi_deg",
    "re_etheta",
    "im_etheta",
    "re_ephi",
    "im_ephi",
];

/// Writes a sampled port set as pattern CSV. Ports are numbered from 1.
/// `comments` are emitted as leading `# ` lines.
pub fn write_pattern_csv<W: Write>(writer: W, ports: &PortSet, comments: &[String]) -> Result<()> {
    let mut writer = writer;
    for c in comments {
        writeln!(writer, "# {c}").map_err(|e| Error::io("<pattern csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PATTERN_HEADER)?;
    for (idx, pattern) in ports.patterns().iter().enumerate() {
        let sampled = pattern.as_sampled().ok_or_else(|| {
            Error::InvalidParameter("only sampled patterns can be written to a file".into())
        })?;
        let l = sampled.lattice();
        for i in 0..l.theta_count {
            for j in 0..l.phi_count {
                let v = sampled.node(i, j);
                w.write_record(&[
                    (idx + 1).to_string(),
                    l.theta_at(i).to_string(),
                    l.phi_at(j).to_string(),
                    v.e_theta.re.to_string(),
                    v.e_theta.im.to_string(),
                    v.e_phi.re.to_string(),
                    v.e_phi.im.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<pattern csv>", e))?;
    Ok(())
}

pub fn save_pattern_file(path: &Path, ports: &PortSet, comments: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pattern_csv(BufWriter::new(file), ports, comments)
}

pub fn load_pattern_file(path: &Path, expected_ports: Option<usize>) -> Result<PortSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pattern_csv(file, expected_ports)
}

struct Row {
    port: i64,
    theta: f64,
    phi: f64,
    value: FieldValue,
}

/// Reads pattern CSV, inferring and validating the lattice.
pub fn read_pattern_csv<R: Read>(reader: R, expected_ports: Option<usize>) -> Result<PortSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != PATTERN_HEADER {
        return Err(Error::Malformed(format!(
            "pattern file header must be '{}'",
            PATTERN_HEADER.join(",")
        )));
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| -> Result<f64> {
            let raw = record.get(k).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| Error::Malformed(format!("line {line}: cannot parse '{raw}'")))
        };
        let port = record
            .get(0)
            .unwrap_or("")
            .parse::<i64>()
            .map_err(|_| Error::Malformed(format!("line {line}: invalid port id")))?;
        let nums = (1..7).map(field).collect::<Result<Vec<_>>>()?;
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { line });
        }
        rows.push(Row {
            port,
            theta: nums[0],
            phi: nums[1],
            value: FieldValue::new(
                Complex64::new(nums[2], nums[3]),
                Complex64::new(nums[4], nums[5]),
            ),
        });
    }
    if rows.is_empty() {
        return Err(Error::Empty("pattern file has no samples"));
    }

    let lattice = infer_lattice(&rows)?;
    let mut by_port: BTreeMap<i64, Vec<Option<FieldValue>>> = BTreeMap::new();
    for row in &rows {
        let slots = by_port
            .entry(row.port)
            .or_insert_with(|| vec![None; lattice.len()]);
        let i = ((row.theta - lattice.theta_start_deg) / lattice.theta_step_deg).round() as usize;
        let j = ((row.phi - lattice.phi_start_deg) / lattice.phi_step_deg).round() as usize;
        let slot = &mut slots[i * lattice.phi_count + j];
        if slot.is_some() {
            return Err(Error::Malformed(format!(
                "duplicate sample for port {} at theta={}, phi={}",
                row.port, row.theta, row.phi
            )));
        }
        *slot = Some(row.value);
    }

    if let Some(expected) = expected_ports {
        if by_port.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: by_port.len(),
            });
        }
    }

    let mut patterns = Vec::with_capacity(by_port.len());
    let mut labels = Vec::with_capacity(by_port.len());
    for (port, slots) in by_port {
        let missing = slots.iter().filter(|s| s.is_none()).count();
        if missing > 0 {
            return Err(Error::IncompleteLattice(format!(
                "port {port} is missing {missing} of {} lattice points",
                lattice.len()
            )));
        }
        let values = slots.into_iter().map(|s| s.expect("checked")).collect();
        patterns.push(FarFieldPattern::sampled(SampledPattern::new(
            lattice, values,
        )?));
        labels.push(format!("port{port}"));
    }
    PortSet::new(patterns, labels)
}

fn unique_sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| (*a - *b).abs() < NODE_TOL);
    values
}

fn uniform_step(values: &[f64], axis: &str) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::IncompleteLattice(format!(
            "need at least 2 distinct {axis} values"
        )));
    }
    let step = (values[values.len() - 1] - values[0]) / (values.len() - 1) as f64;
    for w in values.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-6 * step.max(1.0) {
            return Err(Error::Malformed(format!(
                "inconsistent {axis} steps: {} vs {step}",
                w[1] - w[0]
            )));
        }
    }
    Ok(step)
}

fn infer_lattice(rows: &[Row]) -> Result<Lattice> {
    let thetas = unique_sorted(rows.iter().map(|r| r.theta).collect());
    let phis = unique_sorted(rows.iter().map(|r| r.phi).collect());
    let theta_step = uniform_step(&thetas, "theta")?;
    let phi_step = uniform_step(&phis, "phi")?;
    let lattice = Lattice {
        theta_start_deg: thetas[0],
        theta_step_deg: theta_step,
        theta_count: thetas.len(),
        phi_start_deg: phis[0],
        phi_step_deg: phi_step,
        phi_count: phis.len(),
    };
    lattice.validate()?;
    Ok(lattice)
}
