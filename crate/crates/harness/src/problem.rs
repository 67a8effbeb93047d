//! A fitting problem: the lifted constraint set plus the regression rows
//! hypotheses are fitted from.

use anyhow::{bail, Result};
use maxcon::reformulate::{
    affinity_residual, build_fractional_constraints, build_linear_constraints, homography_residual,
    linearize_fundamental, linearize_homography, triangulation_residual, CorrespondenceSet, FractionalResidual,
    Normalization, PointMatch, TrackObservation,
};
use maxcon::{ConstraintSet, LinearSource, Profile, RegressionDataset};

#[derive(Debug, Clone)]
pub struct Problem {
    pub profile: Profile,
    pub epsilon: f64,
    pub cs: ConstraintSet,
    /// Regression rows for minimal-subset hypotheses, `rows_per_datum`
    /// consecutive rows per datum.
    pub rows: RegressionDataset,
    pub rows_per_datum: usize,
    /// Whether a least-squares fit of `rows` is a meaningful initializer.
    pub least_squares: bool,
}

fn exact_rows(residuals: &[FractionalResidual]) -> Result<RegressionDataset> {
    let d = residuals[0].dim();
    let mut xs = Vec::with_capacity(2 * d * residuals.len());
    let mut ys = Vec::with_capacity(2 * residuals.len());
    for r in residuals {
        for (g, y) in r.exact_fit_rows() {
            xs.extend(g);
            ys.push(y);
        }
    }
    Ok(RegressionDataset::from_rows(d, xs, ys)?)
}

/// Matches with both point sets normalized; the transfer error measured in
/// the second set then scales by `norm_v.scale`.
fn normalized(matches: &[PointMatch]) -> Result<(Vec<PointMatch>, Normalization, Normalization)> {
    let nu = Normalization::fit(matches.iter().map(|m| m.u))?;
    let nv = Normalization::fit(matches.iter().map(|m| m.v))?;
    let out = matches
        .iter()
        .map(|m| PointMatch {
            u: nu.apply(m.u),
            v: nv.apply(m.v),
        })
        .collect();
    Ok((out, nu, nv))
}

/// Track with image points normalized and cameras premultiplied by the
/// same similarity, so reprojection errors scale by `scale`.
fn normalized_track(track: &[TrackObservation]) -> Result<(Vec<TrackObservation>, Normalization)> {
    let norm = Normalization::fit(track.iter().map(|o| o.x))?;
    let t = norm.matrix();
    let out = track
        .iter()
        .map(|o| TrackObservation {
            x: norm.apply(o.x),
            camera: std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| t[i][k] * o.camera[k][j]).sum())),
        })
        .collect();
    Ok((out, norm))
}

impl Problem {
    pub fn regression(data: RegressionDataset, epsilon: f64) -> Result<Self> {
        Ok(Self {
            profile: Profile::Linear,
            epsilon,
            cs: build_linear_constraints(&data, epsilon)?,
            rows: data,
            rows_per_datum: 1,
            least_squares: true,
        })
    }

    pub fn from_correspondences(set: &CorrespondenceSet, profile: Profile, epsilon: f64) -> Result<Self> {
        if set.is_empty() {
            bail!("no correspondences");
        }
        let problem = match profile {
            Profile::Linear => bail!("the linear profile takes regression data, not correspondences"),
            Profile::Fundamental | Profile::HomographyAlgebraic => {
                let matches = set.matches()?;
                let lin = if profile == Profile::Fundamental {
                    linearize_fundamental(matches)?
                } else {
                    linearize_homography(matches)?
                };
                Self {
                    profile,
                    epsilon,
                    cs: lin.constraints(epsilon)?,
                    rows_per_datum: lin.rows_per_datum,
                    rows: lin.dataset,
                    least_squares: true,
                }
            }
            Profile::HomographyGeometric => {
                let (matches, _, nv) = normalized(set.matches()?)?;
                let residuals: Vec<_> = matches.iter().map(homography_residual).collect();
                Self {
                    profile,
                    epsilon,
                    cs: build_fractional_constraints(&residuals, epsilon * nv.scale)?,
                    rows: exact_rows(&residuals)?,
                    rows_per_datum: 2,
                    least_squares: false,
                }
            }
            Profile::Affinity => {
                // The affine error is measured in the first image.
                let (matches, nu, _) = normalized(set.matches()?)?;
                let residuals: Vec<_> = matches.iter().map(affinity_residual).collect();
                Self {
                    profile,
                    epsilon,
                    cs: build_fractional_constraints(&residuals, epsilon * nu.scale)?,
                    rows: exact_rows(&residuals)?,
                    rows_per_datum: 2,
                    least_squares: true,
                }
            }
            Profile::Triangulation => {
                let (track, norm) = normalized_track(set.track()?)?;
                let residuals: Vec<_> = track.iter().map(triangulation_residual).collect();
                Self {
                    profile,
                    epsilon,
                    cs: build_fractional_constraints(&residuals, epsilon * norm.scale)?,
                    rows: exact_rows(&residuals)?,
                    rows_per_datum: 2,
                    least_squares: false,
                }
            }
        };
        Ok(problem)
    }

    pub fn num_data(&self) -> usize {
        self.cs.num_data()
    }

    pub fn model_dim(&self) -> usize {
        self.cs.model_dim()
    }

    pub fn source(&self) -> LinearSource<'_> {
        LinearSource {
            data: &self.rows,
            rows_per_datum: self.rows_per_datum,
            map: None,
        }
    }
}
