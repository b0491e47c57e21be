//! Ellipsoid and segment-tube computations shared by the encoder, the planner
//! audit, and the runtime monitors.
//!
//! The central objects are position-space ellipsoids `{p : (p - c)^T S^{-1} (p - c) <= 1}`
//! and segment tubes (the set of points within distance `eta` of the chord
//! between two waypoints). Everything here is pure arithmetic; no solver state.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("direction vector must be nonzero")]
    ZeroDirection,
    #[error("shape matrix must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Ellipsoid `{p : (p - center)^T shape^{-1} (p - center) <= 1}` with a
/// symmetric positive definite shape matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self, GeometryError> {
        if shape.nrows() != center.len() || shape.ncols() != center.len() {
            return Err(GeometryError::DimensionMismatch(shape.nrows(), center.len()));
        }
        let sym_err = (&shape - shape.transpose()).abs().max();
        if sym_err > 1e-9 * (1.0 + shape.abs().max()) {
            return Err(GeometryError::NotPositiveDefinite);
        }
        if shape.clone().cholesky().is_none() {
            return Err(GeometryError::NotPositiveDefinite);
        }
        Ok(Self { center, shape })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Quadratic form `(p - center)^T shape^{-1} (p - center)`; <= 1 inside.
    pub fn membership_value(&self, p: &DVector<f64>) -> f64 {
        let d = p - &self.center;
        let solved = self
            .shape
            .clone()
            .cholesky()
            .expect("shape is SPD by construction")
            .solve(&d);
        d.dot(&solved)
    }
}

/// Exact minimum of the affine function `a^T p + b` over the ellipsoid:
/// `a^T center + b - sqrt(a^T shape a)`.
pub fn support_min(e: &Ellipsoid, a: &DVector<f64>, b: f64) -> Result<f64, GeometryError> {
    if a.norm() == 0.0 {
        return Err(GeometryError::ZeroDirection);
    }
    if a.len() != e.dim() {
        return Err(GeometryError::DimensionMismatch(a.len(), e.dim()));
    }
    Ok(a.dot(&e.center) + b - (a.dot(&(&e.shape * a))).max(0.0).sqrt())
}

/// The point of the ellipsoid attaining `support_min`: `center - shape a / sqrt(a^T shape a)`.
pub fn support_min_point(e: &Ellipsoid, a: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
    if a.norm() == 0.0 {
        return Err(GeometryError::ZeroDirection);
    }
    let sa = &e.shape * a;
    let denom = a.dot(&sa).max(0.0).sqrt();
    Ok(&e.center - sa / denom)
}

/// Square root of the largest eigenvalue of the shape matrix (longest semi-axis).
pub fn sqrt_lambda_max(e: &Ellipsoid) -> f64 {
    sqrt_lambda_max_of(&e.shape)
}

/// `sqrt(lambda_max(sigma))` for a symmetric PSD matrix.
pub fn sqrt_lambda_max_of(sigma: &DMatrix<f64>) -> f64 {
    let eig = sigma.clone().symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max).max(0.0).sqrt()
}

/// Natural log of `det(shape)`.
pub fn log_det(e: &Ellipsoid) -> f64 {
    log_det_of(&e.shape)
}

/// `ln det(sigma)` via Cholesky; requires SPD input.
pub fn log_det_of(sigma: &DMatrix<f64>) -> f64 {
    log_det_of_checked(sigma).expect("log_det requires an SPD matrix")
}

/// `ln det(sigma)` or None when the matrix is not positive definite.
pub fn log_det_of_checked(sigma: &DMatrix<f64>) -> Option<f64> {
    sigma
        .clone()
        .cholesky()
        .map(|chol| 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Closed intervals `[a.0, a.1]` and `[b.0, b.1]` have empty intersection.
/// A shared endpoint counts as overlap.
pub fn intervals_disjoint(a: (f64, f64), b: (f64, f64)) -> bool {
    a.1 < b.0 || b.1 < a.0
}

/// Tube of radius `radius` around the chord from `start` to `end`:
/// `{p : min_l ||p - ((1-l) start + l end)|| <= radius}`.
#[derive(Debug, Clone)]
pub struct SegmentTube {
    pub start: DVector<f64>,
    pub end: DVector<f64>,
    pub radius: f64,
}

impl SegmentTube {
    /// Euclidean distance from `p` to the chord, minus the tube radius.
    pub fn distance_outside(&self, p: &DVector<f64>) -> f64 {
        let d = &self.end - &self.start;
        let len2 = d.dot(&d);
        let lambda = if len2 <= 0.0 {
            0.0
        } else {
            ((p - &self.start).dot(&d) / len2).clamp(0.0, 1.0)
        };
        let closest = &self.start + d * lambda;
        (p - closest).norm() - self.radius
    }
}

/// One plan segment of a swarm: the chord between consecutive waypoints plus
/// the bounding-ellipsoid matrix active on that segment.
#[derive(Debug, Clone)]
pub struct SegmentRegion {
    pub start: DVector<f64>,
    pub end: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// Margin of the sufficient inter-swarm separation condition for two segments,
/// evaluated with 1-norms on segment midpoints and half-extents:
///
/// ```text
/// ||mid_a - mid_b||_1 - ||half_a||_1 - ||half_b||_1
///   - (sqrt(lmax_a) + sqrt(lmax_b) + 2 eta + zeta + eps) * sqrt(d)
/// ```
///
/// A nonnegative return certifies that any two agents, one per segment region
/// (tube of radius `eta` around the chord, fattened by the ellipsoid), stay at
/// least `zeta + eps` apart.
pub fn segment_separation_margin(
    a: &SegmentRegion,
    b: &SegmentRegion,
    eta: f64,
    zeta: f64,
    eps: f64,
) -> f64 {
    let d = a.start.len();
    let mid_a = (&a.start + &a.end) * 0.5;
    let mid_b = (&b.start + &b.end) * 0.5;
    let half_a = (&a.start - &a.end) * 0.5;
    let half_b = (&b.start - &b.end) * 0.5;
    let norm1 = |v: &DVector<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
    let margin_terms = sqrt_lambda_max_of(&a.sigma)
        + sqrt_lambda_max_of(&b.sigma)
        + 2.0 * eta
        + zeta
        + eps;
    norm1(&(mid_a - mid_b)) - norm1(&half_a) - norm1(&half_b) - margin_terms * (d as f64).sqrt()
}

/// Symmetric positive-definite square root via eigendecomposition.
pub fn sym_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sigma.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Inverse of the symmetric square root.
pub fn sym_inv_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sigma.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn diag2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    #[test]
    fn support_min_unit_ball() {
        let e = Ellipsoid::new(vec2(0.0, 0.0), diag2(1.0, 1.0)).unwrap();
        let v = support_min(&e, &vec2(1.0, 0.0), 0.0).unwrap();
        assert!((v - (-1.0)).abs() < 1e-12, "unit ball support was {v}");
    }

    #[test]
    fn support_min_offset_halfspace() {
        // Ellipsoid of radius 0.1 centered at (0, 2) against the face y >= 1.
        let e = Ellipsoid::new(vec2(0.0, 2.0), diag2(0.01, 0.01)).unwrap();
        let v = support_min(&e, &vec2(0.0, 1.0), -1.0).unwrap();
        assert!((v - 0.9).abs() < 1e-12, "support_min was {v}");
        // Same data with a tube margin eta = 0.05 and eps = 0 leaves 0.85.
        let margin = v - (0.05 + 0.0) * 1.0;
        assert!((margin - 0.85).abs() < 1e-12);
    }

    #[test]
    fn support_min_rejects_zero_direction() {
        let e = Ellipsoid::new(vec2(0.0, 0.0), diag2(1.0, 1.0)).unwrap();
        assert!(matches!(
            support_min(&e, &vec2(0.0, 0.0), 0.0),
            Err(GeometryError::ZeroDirection)
        ));
    }

    #[test]
    fn sqrt_lambda_max_values() {
        let e = Ellipsoid::new(vec2(0.0, 0.0), diag2(0.01, 0.01)).unwrap();
        assert!((sqrt_lambda_max(&e) - 0.1).abs() < 1e-12);
        let e = Ellipsoid::new(vec2(0.0, 0.0), diag2(4.0, 1.0)).unwrap();
        assert!((sqrt_lambda_max(&e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_lambda_max_matches_characteristic_polynomial() {
        // Random-ish SPD 2x2 built from A^T A + I; compare with the quadratic
        // formula for the eigenvalues of [[a, b], [b, c]].
        let cases = [
            (1.3, 0.4, 2.2),
            (0.7, -0.2, 0.9),
            (3.0, 1.1, 1.5),
            (0.02, 0.005, 0.03),
        ];
        for (a, b, c) in cases {
            let m = DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
            let e = Ellipsoid::new(vec2(0.0, 0.0), m).unwrap();
            let tr = a + c;
            let det = a * c - b * b;
            let lmax = 0.5 * tr + (0.25 * tr * tr - det).sqrt();
            assert!(
                (sqrt_lambda_max(&e) - lmax.sqrt()).abs() < 1e-10,
                "case ({a},{b},{c})"
            );
        }
    }

    #[test]
    fn log_det_values() {
        let e = Ellipsoid::new(vec2(0.0, 0.0), diag2(0.01, 0.01)).unwrap();
        assert!((log_det(&e) - (1e-4f64).ln()).abs() < 1e-9);
        let e = Ellipsoid::new(vec2(0.0, 0.0), diag2(1.0, 1.0)).unwrap();
        assert!(log_det(&e).abs() < 1e-12);
        // Volume bound with xi = 2, 5 agents, zeta = 0.01, d = 2.
        let rhs = 2.0 * (2.0 * 5.0 * 0.01f64.powi(2)).ln();
        assert!((rhs - (-13.815510557964274)).abs() < 1e-9);
        assert!((1e-4f64).ln() > rhs, "sigma = 0.01 I satisfies the volume bound");
    }

    #[test]
    fn interval_overlap_cases() {
        assert!(intervals_disjoint((0.0, 1.0), (2.0, 3.0)));
        assert!(!intervals_disjoint((0.0, 2.0), (1.0, 3.0)));
        // Shared endpoint counts as overlap: the intersection is {1}.
        assert!(!intervals_disjoint((0.0, 1.0), (1.0, 2.0)));
    }

    #[test]
    fn separation_margin_identical_segments_is_negative() {
        let seg = SegmentRegion {
            start: vec2(0.0, 0.0),
            end: vec2(0.0, 0.0),
            sigma: diag2(0.01, 0.01),
        };
        let m = segment_separation_margin(&seg, &seg, 0.05, 0.01, 0.0);
        assert!(m < 0.0, "identical static segments must report collision risk, got {m}");
    }

    #[test]
    fn separation_margin_two_points_one_meter_apart() {
        let a = SegmentRegion {
            start: vec2(0.0, 0.0),
            end: vec2(0.0, 0.0),
            sigma: diag2(0.01, 0.01),
        };
        let b = SegmentRegion {
            start: vec2(1.0, 0.0),
            end: vec2(1.0, 0.0),
            sigma: diag2(0.01, 0.01),
        };
        let m = segment_separation_margin(&a, &b, 0.05, 0.01, 0.0);
        let expected = 1.0 - (0.1 + 0.1 + 0.1 + 0.01) * 2.0f64.sqrt();
        assert!((m - expected).abs() < 1e-12, "margin {m} vs {expected}");
        assert!(m > 0.56 && m < 0.57);
    }

    #[test]
    fn sym_sqrt_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[0.02, 0.005, 0.005, 0.03]);
        let r = sym_sqrt(&m);
        assert!(((&r * &r) - &m).abs().max() < 1e-12);
        let ri = sym_inv_sqrt(&m);
        let eye = &r * &ri;
        assert!((eye - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-10);
    }
}
