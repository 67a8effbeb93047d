//! Construction of lifted constraint sets from raw data: absolute linear
//! residuals, generalized fractional (p = 1) geometric residuals, and the
//! algebraic linearizations of fundamental-matrix and homography estimation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{lift_row, ConstraintSet, ConstraintSetBuilder, RegressionDataset};
use crate::scalar::{dot, Real};

/// Builds the `2N`-row set encoding `|x_j^T theta - y_j| <= epsilon`.
pub fn build_linear_constraints<T: Real>(data: &RegressionDataset<T>, epsilon: T) -> Result<ConstraintSet<T>> {
    build_grouped_linear_constraints(data, epsilon, 1)
}

/// Like [`build_linear_constraints`] but treats every `rows_per_datum`
/// consecutive regression rows as one datum (e.g. the two DLT rows of a
/// homography match), giving groups of `2 * rows_per_datum` lifted rows.
pub fn build_grouped_linear_constraints<T: Real>(
    data: &RegressionDataset<T>,
    epsilon: T,
    rows_per_datum: usize,
) -> Result<ConstraintSet<T>> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(invalid("epsilon", "inlier threshold must be positive and finite"));
    }
    if rows_per_datum == 0 || data.len() % rows_per_datum != 0 {
        return Err(invalid(
            "rows_per_datum",
            format!("{} rows cannot be split into groups of {rows_per_datum}", data.len()),
        ));
    }
    let d = data.dim();
    let mut builder = ConstraintSetBuilder::new(d);
    let mut neg = vec![T::zero(); d];
    for group in 0..data.len() / rows_per_datum {
        let mut rows: Vec<(Vec<T>, T)> = Vec::with_capacity(2 * rows_per_datum);
        for j in group * rows_per_datum..(group + 1) * rows_per_datum {
            let x = data.x(j);
            let y = data.y(j);
            for (n, &xi) in neg.iter_mut().zip(x) {
                *n = -xi;
            }
            rows.push((x.to_vec(), epsilon + y));
            rows.push((neg.clone(), epsilon - y));
        }
        builder.push_datum(rows.iter().map(|(a, b)| (a.as_slice(), *b)))?;
    }
    builder.build()
}

/// Per-datum residual `||G theta + h||_1 / (r^T theta + q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalResidual<T: Real = f64> {
    pub g: [Vec<T>; 2],
    pub h: [T; 2],
    pub r: Vec<T>,
    pub q: T,
}

impl<T: Real> FractionalResidual<T> {
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    /// `(||G theta + h||_1, r^T theta + q)`.
    pub fn parts(&self, theta: &[T]) -> (T, T) {
        let n = (dot(&self.g[0], theta) + self.h[0]).abs() + (dot(&self.g[1], theta) + self.h[1]).abs();
        (n, dot(&self.r, theta) + self.q)
    }

    /// The p = 1 inlier predicate `||G theta + h||_1 <= epsilon (r^T theta + q)`.
    pub fn is_inlier(&self, theta: &[T], epsilon: T) -> bool {
        let (num, den) = self.parts(theta);
        num <= epsilon * den
    }

    /// Equations `G theta + h = 0` as regression rows `(g_k, -h_k)`; used to
    /// fit hypotheses from data subsets.
    pub fn exact_fit_rows(&self) -> [(Vec<T>, T); 2] {
        [
            (self.g[0].clone(), -self.h[0]),
            (self.g[1].clone(), -self.h[1]),
        ]
    }

    fn check(&self) -> Result<()> {
        let d = self.r.len();
        if self.g[0].len() != d || self.g[1].len() != d {
            return Err(Error::DimensionMismatch {
                what: "fractional residual G",
                expected: d,
                found: self.g[0].len().min(self.g[1].len()),
            });
        }
        let all = self.g[0].iter().chain(&self.g[1]).chain(&self.r).chain(&self.h);
        if all.chain(std::iter::once(&self.q)).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("fractional residual"));
        }
        Ok(())
    }
}

/// Sign patterns `(sigma_1, sigma_2)` of the four linear rows.
const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

/// Unlifted rows `(s1 g1 + s2 g2 - eps r)^T theta <= eps q - s1 h1 - s2 h2`.
fn fractional_rows<T: Real>(res: &FractionalResidual<T>, epsilon: T) -> [(Vec<T>, T); 4] {
    SIGNS.map(|(s1, s2)| {
        let (s1, s2) = (T::lit(s1), T::lit(s2));
        let a = (0..res.dim())
            .map(|k| s1 * res.g[0][k] + s2 * res.g[1][k] - epsilon * res.r[k])
            .collect();
        (a, epsilon * res.q - s1 * res.h[0] - s2 * res.h[1])
    })
}

/// Four lifted rows `(c, b)` whose conjunction is the p = 1 predicate.
pub fn fractional_to_linear<T: Real>(res: &FractionalResidual<T>, epsilon: T) -> Result<[(Vec<T>, T); 4]> {
    if !(epsilon > T::zero()) {
        return Err(invalid("epsilon", "inlier threshold must be positive"));
    }
    res.check()?;
    Ok(fractional_rows(res, epsilon).map(|(a, b)| (lift_row(&a), b)))
}

/// Constraint set with one four-row group per fractional residual.
pub fn build_fractional_constraints<T: Real>(residuals: &[FractionalResidual<T>], epsilon: T) -> Result<ConstraintSet<T>> {
    if !(epsilon > T::zero()) {
        return Err(invalid("epsilon", "inlier threshold must be positive"));
    }
    let d = residuals.first().map(|r| r.dim()).ok_or(Error::TooFewData {
        needed: 1,
        found: 0,
    })?;
    let mut builder = ConstraintSetBuilder::new(d);
    for res in residuals {
        res.check()?;
        if res.dim() != d {
            return Err(Error::DimensionMismatch {
                what: "fractional residual",
                expected: d,
                found: res.dim(),
            });
        }
        let rows = fractional_rows(res, epsilon);
        builder.push_datum(rows.iter().map(|(a, b)| (a.as_slice(), *b)))?;
    }
    builder.build()
}

/// A two-view point match `u <-> v` (pixel units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMatch<T: Real = f64> {
    pub u: [T; 2],
    pub v: [T; 2],
}

/// One observation of a 3D point: image point and its 3x4 camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation<T: Real = f64> {
    pub x: [T; 2],
    pub camera: [[T; 4]; 3],
}

/// Input correspondences: two-view matches or a multi-view track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrespondenceSet<T: Real = f64> {
    Matches(Vec<PointMatch<T>>),
    Track(Vec<TrackObservation<T>>),
}

impl<T: Real> CorrespondenceSet<T> {
    pub fn len(&self) -> usize {
        match self {
            Self::Matches(m) => m.len(),
            Self::Track(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matches(&self) -> Result<&[PointMatch<T>]> {
        match self {
            Self::Matches(m) => Ok(m),
            Self::Track(_) => Err(invalid("correspondences", "expected two-view matches, got a track")),
        }
    }

    pub fn track(&self) -> Result<&[TrackObservation<T>]> {
        match self {
            Self::Track(t) => Ok(t),
            Self::Matches(_) => Err(invalid("correspondences", "expected a track, got two-view matches")),
        }
    }
}

/// Transfer-error residual of `v ~ H u` over the eight free entries of `H`
/// (row-major, `H_33 = 1`).
pub fn homography_residual<T: Real>(pair: &PointMatch<T>) -> FractionalResidual<T> {
    let (o, z) = (T::one(), T::zero());
    let [ux, uy] = pair.u;
    let [vx, vy] = pair.v;
    FractionalResidual {
        g: [
            vec![ux, uy, o, z, z, z, -vx * ux, -vx * uy],
            vec![z, z, z, ux, uy, o, -vy * ux, -vy * uy],
        ],
        h: [-vx, -vy],
        r: vec![z, z, z, z, z, z, ux, uy],
        q: o,
    }
}

/// Matching error `||u - A [v; 1]||_1` over the six affine parameters
/// (row-major 2x3).
pub fn affinity_residual<T: Real>(pair: &PointMatch<T>) -> FractionalResidual<T> {
    let (o, z) = (T::one(), T::zero());
    let [ux, uy] = pair.u;
    let [vx, vy] = pair.v;
    FractionalResidual {
        g: [vec![-vx, -vy, -o, z, z, z], vec![z, z, z, -vx, -vy, -o]],
        h: [ux, uy],
        r: vec![z; 6],
        q: o,
    }
}

/// Four lifted affinity rows for one match.
pub fn affinity_constraints<T: Real>(pair: &PointMatch<T>, epsilon: T) -> Result<[(Vec<T>, T); 4]> {
    fractional_to_linear(&affinity_residual(pair), epsilon)
}

/// Reprojection error of a 3D point under camera `P`.
pub fn triangulation_residual<T: Real>(obs: &TrackObservation<T>) -> FractionalResidual<T> {
    let p = &obs.camera;
    let row = |k: usize| -> [T; 4] { std::array::from_fn(|c| p[k][c] - obs.x[k] * p[2][c]) };
    let (r0, r1) = (row(0), row(1));
    FractionalResidual {
        g: [r0[..3].to_vec(), r1[..3].to_vec()],
        h: [r0[3], r1[3]],
        r: p[2][..3].to_vec(),
        q: p[2][3],
    }
}

type Mat3<T> = [[T; 3]; 3];

fn mat3_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).fold(T::zero(), |acc, k| acc + a[i][k] * b[k][j])))
}

fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

/// Isotropic similarity mapping points to zero centroid and mean distance
/// `sqrt(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization<T: Real = f64> {
    pub scale: T,
    pub center: [T; 2],
}

impl<T: Real> Normalization<T> {
    pub fn fit(points: impl Iterator<Item = [T; 2]> + Clone) -> Result<Self> {
        let n = T::lit(points.clone().count() as f64);
        let (sx, sy) = points.clone().fold((T::zero(), T::zero()), |(a, b), p| (a + p[0], b + p[1]));
        let center = [sx / n, sy / n];
        let mean_dist = points
            .map(|p| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt())
            .sum::<T>()
            / n;
        if !(mean_dist > T::zero()) {
            return Err(Error::Degenerate("all points coincide".into()));
        }
        Ok(Self {
            scale: T::lit(std::f64::consts::SQRT_2) / mean_dist,
            center,
        })
    }

    pub fn apply(&self, p: [T; 2]) -> [T; 2] {
        [
            self.scale * (p[0] - self.center[0]),
            self.scale * (p[1] - self.center[1]),
        ]
    }

    pub fn matrix(&self) -> Mat3<T> {
        let (s, z, o) = (self.scale, T::zero(), T::one());
        [
            [s, z, -s * self.center[0]],
            [z, s, -s * self.center[1]],
            [z, z, o],
        ]
    }

    pub fn inverse_matrix(&self) -> Mat3<T> {
        let (z, o) = (T::zero(), T::one());
        let inv = o / self.scale;
        [[inv, z, self.center[0]], [z, inv, self.center[1]], [z, z, o]]
    }
}

/// Which algebraic model a [`LinearizedModel`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgebraicModel {
    Fundamental,
    Homography,
}

/// A regression form of an algebraic two-view model in normalized
/// coordinates, with the transforms needed to map `theta` back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedModel<T: Real = f64> {
    pub kind: AlgebraicModel,
    pub dataset: RegressionDataset<T>,
    pub rows_per_datum: usize,
    /// Original indices of the matches that were kept.
    pub kept: Vec<usize>,
    pub norm_u: Normalization<T>,
    pub norm_v: Normalization<T>,
}

fn complete<T: Real>(theta: &[T]) -> Mat3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| if i * 3 + j == 8 { T::one() } else { theta[i * 3 + j] }))
}

fn scale_to_unit_corner<T: Real>(m: Mat3<T>) -> Option<[T; 8]> {
    let c = m[2][2];
    if c.abs() <= T::epsilon() {
        return None;
    }
    Some(std::array::from_fn(|k| m[k / 3][k % 3] / c))
}

impl<T: Real> LinearizedModel<T> {
    /// Constraint set grouping the regression rows of each match.
    pub fn constraints(&self, epsilon: T) -> Result<ConstraintSet<T>> {
        build_grouped_linear_constraints(&self.dataset, epsilon, self.rows_per_datum)
    }

    /// Full 3x3 matrix in pixel coordinates from normalized `theta`.
    pub fn to_matrix(&self, theta: &[T]) -> Result<Mat3<T>> {
        if theta.len() != 8 {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: 8,
                found: theta.len(),
            });
        }
        let m = complete(theta);
        Ok(match self.kind {
            // F = T_v^T F_hat T_u
            AlgebraicModel::Fundamental => {
                mat3_mul(&mat3_mul(&transpose(&self.norm_v.matrix()), &m), &self.norm_u.matrix())
            }
            // H = T_v^-1 H_hat T_u
            AlgebraicModel::Homography => mat3_mul(&mat3_mul(&self.norm_v.inverse_matrix(), &m), &self.norm_u.matrix()),
        })
    }

    /// Normalized `theta` of a pixel-space matrix, or `None` when its
    /// normalized bottom-right entry vanishes.
    pub fn theta_of(&self, matrix: &Mat3<T>) -> Option<Vec<T>> {
        let m = match self.kind {
            AlgebraicModel::Fundamental => mat3_mul(
                &mat3_mul(&transpose(&self.norm_v.inverse_matrix()), matrix),
                &self.norm_u.inverse_matrix(),
            ),
            AlgebraicModel::Homography => mat3_mul(&mat3_mul(&self.norm_v.matrix(), matrix), &self.norm_u.inverse_matrix()),
        };
        scale_to_unit_corner(m).map(|t| t.to_vec())
    }
}

fn normalizations<T: Real>(matches: &[PointMatch<T>]) -> Result<(Normalization<T>, Normalization<T>)> {
    Ok((
        Normalization::fit(matches.iter().map(|m| m.u))?,
        Normalization::fit(matches.iter().map(|m| m.v))?,
    ))
}

/// One regression row per match from `v^T F u = 0` with `F_33 = 1`.
pub fn linearize_fundamental<T: Real>(matches: &[PointMatch<T>]) -> Result<LinearizedModel<T>> {
    if matches.len() < 8 {
        return Err(Error::TooFewData {
            needed: 8,
            found: matches.len(),
        });
    }
    let (nu, nv) = normalizations(matches)?;
    let mut xs = Vec::with_capacity(8 * matches.len());
    let mut ys = Vec::with_capacity(matches.len());
    let mut kept = Vec::with_capacity(matches.len());
    for (j, m) in matches.iter().enumerate() {
        let [ux, uy] = nu.apply(m.u);
        let [vx, vy] = nv.apply(m.v);
        let row = [vx * ux, vx * uy, vx, vy * ux, vy * uy, vy, ux, uy];
        if row.iter().all(|x| *x == T::zero()) {
            log::warn!("dropping match {j}: zero regression row after normalization");
            continue;
        }
        xs.extend_from_slice(&row);
        ys.push(-T::one());
        kept.push(j);
    }
    if kept.len() < 8 {
        return Err(Error::Degenerate("fewer than 8 usable matches".into()));
    }
    Ok(LinearizedModel {
        kind: AlgebraicModel::Fundamental,
        dataset: RegressionDataset::from_rows(8, xs, ys)?,
        rows_per_datum: 1,
        kept,
        norm_u: nu,
        norm_v: nv,
    })
}

/// Two DLT regression rows per match from `v ~ H u` with `H_33 = 1`.
pub fn linearize_homography<T: Real>(matches: &[PointMatch<T>]) -> Result<LinearizedModel<T>> {
    if matches.len() < 4 {
        return Err(Error::TooFewData {
            needed: 4,
            found: matches.len(),
        });
    }
    let (nu, nv) = normalizations(matches)?;
    let mut xs = Vec::with_capacity(16 * matches.len());
    let mut ys = Vec::with_capacity(2 * matches.len());
    for m in matches {
        let normalized = PointMatch {
            u: nu.apply(m.u),
            v: nv.apply(m.v),
        };
        for (g, y) in homography_residual(&normalized).exact_fit_rows() {
            xs.extend_from_slice(&g);
            ys.push(y);
        }
    }
    Ok(LinearizedModel {
        kind: AlgebraicModel::Homography,
        dataset: RegressionDataset::from_rows(8, xs, ys)?,
        rows_per_datum: 2,
        kept: (0..matches.len()).collect(),
        norm_u: nu,
        norm_v: nv,
    })
}
