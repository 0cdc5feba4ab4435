//! Node placement, rectangular placement areas, planar-array geometry and
//! far-field line-of-sight steering vectors.
//!
//! The RIS is mounted parallel to the `yz` plane. Angles toward a node `i`
//! are measured from the RIS (or, for the BS end of the BS-RIS link, from
//! the BS) as
//!
//! ```text
//! theta = acos((x_ref - x_i) / D)
//! phi   = atan2(y_ref - y_i, z_ref - z_i)
//! ```
//!
//! and element `l` (zero based, row-major over `n_horizontal` columns) of a
//! UPA steering vector is `exp(j 2 pi (d/lambda) xi_l) / sqrt(L)` with
//! `xi_l = row * sin(theta) cos(phi) + col * sin(theta) sin(phi)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Position3D {
    fn from(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

/// Euclidean distance between two points.
pub fn distance(p: &Position3D, q: &Position3D) -> f64 {
    let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Axis-aligned rectangle at a fixed height. `width` spans x, `length` spans y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarArea {
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub length: f64,
    pub z: f64,
}

impl PlanarArea {
    pub fn new(center_x: f64, center_y: f64, width: f64, length: f64, z: f64) -> Result<Self> {
        let area = Self {
            center_x,
            center_y,
            width,
            length,
            z,
        };
        area.validate()?;
        Ok(area)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.center_x, self.center_y, self.width, self.length, self.z]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("area coordinates must be finite".into()));
        }
        if self.width <= 0.0 || self.length <= 0.0 {
            return Err(Error::Domain(format!(
                "area extents must be positive (width {}, length {})",
                self.width, self.length
            )));
        }
        Ok(())
    }

    /// Surface measure in m².
    pub fn measure(&self) -> f64 {
        self.width * self.length
    }

    pub fn center(&self) -> Position3D {
        Position3D::new(self.center_x, self.center_y, self.z)
    }

    pub fn x_range(&self) -> (f64, f64) {
        (
            self.center_x - 0.5 * self.width,
            self.center_x + 0.5 * self.width,
        )
    }

    pub fn y_range(&self) -> (f64, f64) {
        (
            self.center_y - 0.5 * self.length,
            self.center_y + 0.5 * self.length,
        )
    }

    /// Center of cell `(ix, iy)` of an `nx` by `ny` partition.
    pub fn cell_center(&self, ix: usize, iy: usize, nx: usize, ny: usize) -> Position3D {
        let (x0, _) = self.x_range();
        let (y0, _) = self.y_range();
        Position3D::new(
            x0 + (ix as f64 + 0.5) * self.width / nx as f64,
            y0 + (iy as f64 + 0.5) * self.length / ny as f64,
            self.z,
        )
    }

    /// Uniform draw inside cell `(ix, iy)` of an `nx` by `ny` partition.
    pub fn sample_in_cell<R: Rng + ?Sized>(
        &self,
        ix: usize,
        iy: usize,
        nx: usize,
        ny: usize,
        rng: &mut R,
    ) -> Position3D {
        let (x0, _) = self.x_range();
        let (y0, _) = self.y_range();
        let u: f64 = rng.random();
        let w: f64 = rng.random();
        Position3D::new(
            x0 + (ix as f64 + u) * self.width / nx as f64,
            y0 + (iy as f64 + w) * self.length / ny as f64,
            self.z,
        )
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Position3D {
        self.sample_in_cell(0, 0, 1, 1, rng)
    }

    pub fn contains(&self, p: &Position3D) -> bool {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        (x0..=x1).contains(&p.x) && (y0..=y1).contains(&p.y)
    }

    /// True when the two rectangles share interior points in the xy plane.
    /// Rectangles that only touch along an edge do not overlap.
    pub fn overlaps(&self, other: &PlanarArea) -> bool {
        let (ax0, ax1) = self.x_range();
        let (ay0, ay1) = self.y_range();
        let (bx0, bx1) = other.x_range();
        let (by0, by1) = other.y_range();
        ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
    }
}

/// Uniform planar array with `n_vertical * n_horizontal` elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpaGeometry {
    pub n_vertical: usize,
    pub n_horizontal: usize,
    #[serde(default = "default_spacing_ratio")]
    pub spacing_ratio: f64,
}

fn default_spacing_ratio() -> f64 {
    0.5
}

impl UpaGeometry {
    pub fn new(n_vertical: usize, n_horizontal: usize, spacing_ratio: f64) -> Result<Self> {
        let geom = Self {
            n_vertical,
            n_horizontal,
            spacing_ratio,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vertical == 0 || self.n_horizontal == 0 {
            return Err(Error::Domain("array dimensions must be at least 1".into()));
        }
        if !(self.spacing_ratio > 0.0 && self.spacing_ratio.is_finite()) {
            return Err(Error::Domain("element spacing ratio must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_vertical * self.n_horizontal
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Elevation and azimuth in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    pub elevation: f64,
    pub azimuth: f64,
}

/// Angles of `p_i` as seen from the reference array at `p_ref`.
pub fn departure_angles(p_ref: &Position3D, p_i: &Position3D) -> Result<AnglePair> {
    let d = distance(p_ref, p_i);
    if d == 0.0 {
        return Err(Error::Domain(
            "departure angles undefined for coincident points".into(),
        ));
    }
    if !d.is_finite() {
        return Err(Error::Domain("non-finite node position".into()));
    }
    let cos_el = ((p_ref.x - p_i.x) / d).clamp(-1.0, 1.0);
    Ok(AnglePair {
        elevation: cos_el.acos(),
        azimuth: (p_ref.y - p_i.y).atan2(p_ref.z - p_i.z),
    })
}

/// Unit-norm far-field response of `geom` toward `angles`.
pub fn steering_vector(geom: &UpaGeometry, angles: &AnglePair) -> CVector {
    let l = geom.len();
    let scale = 1.0 / (l as f64).sqrt();
    let sin_el = angles.elevation.sin();
    let vert = sin_el * angles.azimuth.cos();
    let horiz = sin_el * angles.azimuth.sin();
    let k = 2.0 * PI * geom.spacing_ratio;
    CVector::from_iterator(
        l,
        (0..l).map(|idx| {
            let row = (idx / geom.n_horizontal) as f64;
            let col = (idx % geom.n_horizontal) as f64;
            Complex64::from_polar(scale, k * (row * vert + col * horiz))
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn distance_examples() {
        let bs = Position3D::new(0.0, 0.0, 7.5);
        let ris = Position3D::new(0.0, 50.0, 3.0);
        assert!(close(distance(&bs, &ris), 2520.25f64.sqrt(), 1e-12));
        assert!(close(distance(&bs, &ris), 50.2021, 1e-4));
        assert_eq!(distance(&ris, &ris), 0.0);
        let o = Position3D::new(0.0, 0.0, 0.0);
        assert_eq!(distance(&o, &Position3D::new(3.0, 4.0, 0.0)), 5.0);
    }

    #[test]
    fn angles_hand_evaluated() {
        let ris = Position3D::new(0.0, 50.0, 3.0);
        let a = departure_angles(&ris, &Position3D::new(-1.0, 50.0, 2.0)).unwrap();
        // x_ris - x_i = +1
        assert!(close(a.elevation, PI / 4.0, 1e-12));
        assert!(close(a.azimuth, 0.0, 1e-15));

        let rx = Position3D::new(-15.0, 30.0, 1.5);
        assert!(close(distance(&ris, &rx), 25.045, 1e-3));
        let a = departure_angles(&ris, &rx).unwrap();
        assert!(close(a.elevation, 0.9287, 1e-4));
        assert!(close(a.azimuth, 1.4959, 1e-4));
    }

    #[test]
    fn coincident_points_rejected() {
        let p = Position3D::new(1.0, 2.0, 3.0);
        assert!(matches!(departure_angles(&p, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn azimuth_zero_when_dy_zero() {
        let ris = Position3D::new(0.0, 0.0, 5.0);
        let a = departure_angles(&ris, &Position3D::new(-3.0, 0.0, 1.0)).unwrap();
        assert_eq!(a.azimuth, 0.0);
    }

    #[test]
    fn steering_broadside_is_flat() {
        let g = UpaGeometry::new(3, 4, 0.5).unwrap();
        let a = steering_vector(
            &g,
            &AnglePair {
                elevation: 0.0,
                azimuth: 1.234,
            },
        );
        for z in a.iter() {
            assert!(close(z.re, 1.0 / 12f64.sqrt(), 1e-15));
            assert!(close(z.im, 0.0, 1e-15));
        }
    }

    #[test]
    fn steering_two_element_example() {
        let g = UpaGeometry::new(1, 2, 0.5).unwrap();
        let a = steering_vector(
            &g,
            &AnglePair {
                elevation: PI / 2.0,
                azimuth: PI / 2.0,
            },
        );
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - Complex64::new(s, 0.0)).norm() < 1e-12);
        assert!((a[1] - Complex64::new(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn area_measure_and_overlap() {
        let rx = PlanarArea::new(-15.0, 30.0, 24.0, 15.0, 1.5).unwrap();
        let eve = PlanarArea::new(15.0, 27.5, 24.0, 15.0, 1.5).unwrap();
        assert_eq!(rx.measure(), 360.0);
        assert!(!rx.overlaps(&eve));
        let shifted = PlanarArea::new(0.0, 30.0, 24.0, 15.0, 1.5).unwrap();
        assert!(rx.overlaps(&shifted));
        // shared edge only
        let touching = PlanarArea::new(9.0, 30.0, 24.0, 15.0, 1.5).unwrap();
        assert!(!rx.overlaps(&touching));
        assert!(PlanarArea::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        let unit = PlanarArea::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(unit.measure(), 1.0);
        let doubled = PlanarArea::new(0.0, 0.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(doubled.measure(), 2.0 * unit.measure());
    }

    #[test]
    fn cell_centers_tile_area() {
        let a = PlanarArea::new(1.0, 2.0, 4.0, 2.0, 0.5).unwrap();
        let c = a.cell_center(0, 0, 1, 1);
        assert_eq!((c.x, c.y, c.z), (1.0, 2.0, 0.5));
        let c = a.cell_center(3, 1, 4, 2);
        assert!(close(c.x, 2.5, 1e-15) && close(c.y, 2.5, 1e-15));
    }

    use proptest::prelude::*;

    fn coord() -> impl Strategy<Value = f64> {
        -100.0..100.0f64
    }

    fn point() -> impl Strategy<Value = Position3D> {
        (coord(), coord(), coord()).prop_map(|(x, y, z)| Position3D::new(x, y, z))
    }

    proptest! {
        #[test]
        fn steering_unit_norm(nv in 1usize..12, nh in 1usize..16, el in 0.0..PI, az in -PI..PI) {
            let g = UpaGeometry::new(nv, nh, 0.5).unwrap();
            let a = steering_vector(&g, &AnglePair { elevation: el, azimuth: az });
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            let first = Complex64::new(1.0 / (g.len() as f64).sqrt(), 0.0);
            prop_assert!((a[0] - first).norm() < 1e-15);
        }

        #[test]
        fn angles_rebuild_offset(r in point(), p in point()) {
            prop_assume!(distance(&r, &p) > 1e-6);
            let d = distance(&r, &p);
            let a = departure_angles(&r, &p).unwrap();
            let (se, ce) = a.elevation.sin_cos();
            let rebuilt = Position3D::new(
                r.x - d * ce,
                r.y - d * se * a.azimuth.sin(),
                r.z - d * se * a.azimuth.cos(),
            );
            prop_assert!(distance(&rebuilt, &p) < 1e-9);
        }

        #[test]
        fn distance_is_a_metric(a in point(), b in point(), c in point()) {
            prop_assert_eq!(distance(&a, &b), distance(&b, &a));
            prop_assert_eq!(distance(&a, &a), 0.0);
            prop_assert!(distance(&a, &c) <= distance(&a, &b) + distance(&b, &c) + 1e-12);
        }
    }
}
