//! Candidate DoA grids and angular error metrics.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::patterns::{exact_quotient, Direction};

/// Golden angle in degrees, `180·(3 − √5)`.
const GOLDEN_ANGLE_DEG: f64 = 137.507_764_050_037_85;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridKind {
    HemisphereQuasiUniform { count: usize },
    Equiangular { step_deg: f64 },
    Custom { count: usize },
}

/// Ordered set of candidate (or true) directions.
#[derive(Clone, Debug, PartialEq)]
pub struct DoaGrid {
    directions: Vec<Direction>,
    kind: GridKind,
}

impl DoaGrid {
    pub fn from_directions(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::Empty("grid has no directions"));
        }
        Ok(Self {
            kind: GridKind::Custom {
                count: directions.len(),
            },
            directions,
        })
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Short textual form, e.g. `hemisphere:341`.
    pub fn describe(&self) -> String {
        match self.kind {
            GridKind::HemisphereQuasiUniform { count } => format!("hemisphere:{count}"),
            GridKind::Equiangular { step_deg } => format!("equiangular:{step_deg}"),
            GridKind::Custom { count } => format!("custom:{count}"),
        }
    }

    /// Writes `index,theta_deg,phi_deg`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "theta_deg", "phi_deg"])?;
        for (k, d) in self.directions.iter().enumerate() {
            w.write_record(&[
                k.to_string(),
                d.theta_deg().to_string(),
                d.phi_deg().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<grid csv>", e))?;
        Ok(())
    }
}

/// Quasi-uniform grid of exactly `n` directions on the upper hemisphere.
///
/// Spherical Fibonacci lattice: `cos θ_i = 1 − (i + ½)/n` spreads the points
/// evenly in solid angle and each step advances the azimuth by the golden
/// angle.
pub fn hemisphere_grid(n: usize) -> Result<DoaGrid> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "hemisphere grid needs at least 4 points, got {n}"
        )));
    }
    let directions = (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let theta = z.acos().to_degrees();
            let phi = (i as f64 * GOLDEN_ANGLE_DEG).rem_euclid(360.0);
            Direction::new(theta, phi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DoaGrid {
        directions,
        kind: GridKind::HemisphereQuasiUniform { count: n },
    })
}

/// Regular (theta, phi) lattice on the upper hemisphere with a single pole point.
pub fn equiangular_grid(step_deg: f64) -> Result<DoaGrid> {
    if !(step_deg > 0.0) || !step_deg.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "grid step must be positive, got {step_deg}"
        )));
    }
    let rows = exact_quotient(90.0, step_deg);
    let cols = exact_quotient(360.0, step_deg);
    let (Some(rows), Some(cols)) = (rows, cols) else {
        return Err(Error::InvalidParameter(format!(
            "grid step {step_deg}° must divide both 90° and 360°"
        )));
    };
    let mut directions = Vec::with_capacity(1 + rows * cols);
    directions.push(Direction::new(0.0, 0.0)?);
    for i in 1..=rows {
        for j in 0..cols {
            directions.push(Direction::new(i as f64 * step_deg, j as f64 * step_deg)?);
        }
    }
    Ok(DoaGrid {
        directions,
        kind: GridKind::Equiangular { step_deg },
    })
}

/// Parses `hemisphere:<n>` or `equiangular:<step_deg>`.
pub fn parse_grid_spec(spec: &str) -> Result<DoaGrid> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameter(format!("invalid grid '{spec}'")))?;
    match kind.trim() {
        "hemisphere" => {
            let n = arg.trim().parse::<usize>().map_err(|_| {
                Error::InvalidParameter(format!("invalid hemisphere point count '{arg}'"))
            })?;
            hemisphere_grid(n)
        }
        "equiangular" => {
            let step = arg
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("invalid grid step '{arg}'")))?;
            equiangular_grid(step)
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown grid kind '{other}' (expected hemisphere or equiangular)"
        ))),
    }
}

/// Angle between the unit vectors of `a` and `b`, in `[0°, 180°]`.
pub fn great_circle_error(a: &Direction, b: &Direction) -> f64 {
    let u = a.unit_vector();
    let v = b.unit_vector();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    sin.atan2(dot).to_degrees()
}

/// Signed circular difference `a − b` wrapped into `(−180°, 180°]`.
pub fn azimuth_error(a_phi_deg: f64, b_phi_deg: f64) -> f64 {
    let d = (a_phi_deg - b_phi_deg).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Plain theta difference `a − b`.
pub fn elevation_error(a_theta_deg: f64, b_theta_deg: f64) -> f64 {
    a_theta_deg - b_theta_deg
}
