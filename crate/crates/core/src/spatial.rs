//! Area correlation matrices `J = ∫_S (M_f(p) + f̄(p) f̄(p)^H) dA`.
//!
//! The integral is approximated with the midpoint rule on a regular grid of
//! cells. Each cell contributes a scaled identity (scattering) and a rank-one
//! LOS term, so accumulation costs one `L x L` rank-one update per cell.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{link_statistics, PathlossModel, RicianModel};
use crate::error::{Error, Result};
use crate::geometry::{PlanarArea, Position3D, UpaGeometry};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureGrid {
    pub nx: usize,
    pub ny: usize,
}

impl QuadratureGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Domain("quadrature grid needs at least one cell per axis".into()));
        }
        Ok(Self { nx, ny })
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self { nx: 64, ny: 64 }
    }
}

/// Hermitian positive semi-definite `L x L` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(pub CMatrix);

impl CorrelationMatrix {
    pub fn zeros(l: usize) -> Self {
        Self(CMatrix::zeros(l, l))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `‖J - J^H‖_F / ‖J‖_F` (zero for the zero matrix).
    pub fn hermiticity_residual(&self) -> f64 {
        let norm = self.0.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (&self.0 - self.0.adjoint()).norm() / norm
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        sym.symmetric_eigenvalues().min()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * Complex64::new(c, 0.0))
    }
}

pub fn area_measure(area: &PlanarArea) -> f64 {
    area.measure()
}

/// Midpoint-rule approximation of `J` over `area`.
pub fn compute_correlation(
    area: &PlanarArea,
    grid: &QuadratureGrid,
    p_ris: &Position3D,
    ris_geom: &UpaGeometry,
    model: &PathlossModel,
    rician: &RicianModel,
) -> Result<CorrelationMatrix> {
    area.validate()?;
    ris_geom.validate()?;
    let l = ris_geom.len();
    let cell_area = area.measure() / grid.cells() as f64;

    // one partial sum per grid column, reduced in a fixed order afterwards
    let columns: Vec<(CMatrix, f64)> = (0..grid.nx)
        .into_par_iter()
        .map(|ix| -> Result<(CMatrix, f64)> {
            let mut acc = CMatrix::zeros(l, l);
            let mut diag = 0.0;
            for iy in 0..grid.ny {
                let p = area.cell_center(ix, iy, grid.nx, grid.ny);
                let stats = link_statistics(p_ris, ris_geom, &p, model, rician)?;
                diag += stats.covariance_scale;
                acc.gerc(Complex64::new(1.0, 0.0), &stats.mean, &stats.mean, Complex64::new(1.0, 0.0));
            }
            Ok((acc, diag))
        })
        .collect::<Result<_>>()?;

    let mut j = CMatrix::zeros(l, l);
    let mut diag = 0.0;
    for (part, d) in &columns {
        j += part;
        diag += d;
    }
    for i in 0..l {
        j[(i, i)] += Complex64::new(diag, 0.0);
    }
    j *= Complex64::new(cell_area, 0.0);
    let j = (&j + j.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(CorrelationMatrix(j))
}

/// Stable fingerprint of everything that determines `J` besides the grid.
pub fn correlation_key(
    area: &PlanarArea,
    p_ris: &Position3D,
    ris_geom: &UpaGeometry,
    model: &PathlossModel,
    rician: &RicianModel,
) -> String {
    let mut hasher = Sha256::new();
    let fields = [
        area.center_x,
        area.center_y,
        area.width,
        area.length,
        area.z,
        p_ris.x,
        p_ris.y,
        p_ris.z,
        ris_geom.n_vertical as f64,
        ris_geom.n_horizontal as f64,
        ris_geom.spacing_ratio,
        model.pl0,
        model.d0,
        model.alpha,
        rician.k_factor,
    ];
    for f in fields {
        hasher.update(f.to_bits().to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Header describing a cached correlation matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationHeader {
    pub dim: usize,
    pub grid: QuadratureGrid,
    pub key: String,
}

/// Write `J` as CSV: one comment header line, then `L` rows of `2L`
/// interleaved real/imaginary values.
pub fn write_correlation_csv(
    path: &Path,
    j: &CorrelationMatrix,
    grid: &QuadratureGrid,
    key: &str,
) -> Result<()> {
    let mut out = String::new();
    let l = j.dim();
    let _ = writeln!(out, "# L={l} nx={} ny={} area_hash={key}", grid.nx, grid.ny);
    for r in 0..l {
        let row: Vec<String> = (0..l)
            .flat_map(|c| {
                let z = j.0[(r, c)];
                [format!("{:e}", z.re), format!("{:e}", z.im)]
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_correlation_csv(path: &Path) -> Result<(CorrelationHeader, CorrelationMatrix)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let bad = |msg: &str| Error::Numerical(format!("{}: {msg}", path.display()));
    let header = lines
        .next()
        .ok_or_else(|| bad("empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let header = parse_header(&header).ok_or_else(|| bad("malformed header"))?;
    let l = header.dim;
    let mut m = DMatrix::zeros(l, l);
    for r in 0..l {
        let line = lines
            .next()
            .ok_or_else(|| bad("truncated matrix"))?
            .map_err(|e| Error::io(path, e))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("unparsable value"))?;
        if vals.len() != 2 * l {
            return Err(bad("row length does not match L"));
        }
        for c in 0..l {
            m[(r, c)] = Complex64::new(vals[2 * c], vals[2 * c + 1]);
        }
    }
    Ok((header, CorrelationMatrix(m)))
}

fn parse_header(line: &str) -> Option<CorrelationHeader> {
    let mut dim = None;
    let mut nx = None;
    let mut ny = None;
    let mut key = None;
    for tok in line.strip_prefix('#')?.split_whitespace() {
        let (k, v) = tok.split_once('=')?;
        match k {
            "L" => dim = v.parse().ok(),
            "nx" => nx = v.parse().ok(),
            "ny" => ny = v.parse().ok(),
            "area_hash" => key = Some(v.to_string()),
            _ => {}
        }
    }
    Some(CorrelationHeader {
        dim: dim?,
        grid: QuadratureGrid::new(nx?, ny?).ok()?,
        key: key?,
    })
}
