//! First canonical pair via whitening and a singular value decomposition.
//!
//! Both auto-covariances get a ridge of `ridge * trace / dim` on the
//! diagonal, are whitened with their symmetric inverse square root, and the
//! dominant singular triplet of the whitened cross-covariance gives the
//! canonical directions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Ridge applied when the caller has no reason to choose another one.
pub const DEFAULT_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPair {
    pub x_weights: DVector<f64>,
    pub y_weights: DVector<f64>,
    /// Correlation of the projections under the unregularised covariances.
    pub correlation: f64,
}

/// Second-order statistics of two row-centred views.
#[derive(Debug, Clone)]
pub struct Covariances {
    pub xx: DMatrix<f64>,
    pub yy: DMatrix<f64>,
    pub xy: DMatrix<f64>,
}

impl Covariances {
    /// Centres the rows of `x` (p × n) and `y` (q × n) and forms the
    /// unnormalised scatter matrices.
    pub fn from_views(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::dim(format!(
                "views have {} and {} observations",
                x.ncols(),
                y.ncols()
            )));
        }
        let xc = centre_rows(x);
        let yc = centre_rows(y);
        Ok(Self {
            xx: &xc * xc.transpose(),
            yy: &yc * yc.transpose(),
            xy: &xc * yc.transpose(),
        })
    }

    pub fn correlation(&self, wx: &DVector<f64>, wy: &DVector<f64>) -> f64 {
        let num = (wx.transpose() * &self.xy * wy)[0];
        let vx = (wx.transpose() * &self.xx * wx)[0];
        let vy = (wy.transpose() * &self.yy * wy)[0];
        if vx <= 0.0 || vy <= 0.0 {
            return 0.0;
        }
        num / (vx * vy).sqrt()
    }
}

pub fn centre_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    out
}

/// Adds `ridge * trace / dim` to the diagonal.
pub fn regularise(cov: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let dim = cov.nrows();
    let shift = ridge * cov.trace() / dim as f64;
    let mut out = cov.clone();
    for i in 0..dim {
        out[(i, i)] += shift;
    }
    out
}

/// Symmetric inverse square root `V diag(λ^-1/2) V^T`.
pub fn inverse_sqrt(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    // Below this the whitening would only amplify rounding noise.
    if !(max > 0.0) || min <= max * 1e-14 {
        return Err(Error::Singular(format!(
            "{what} covariance has eigenvalues in [{min:e}, {max:e}]"
        )));
    }
    let scale = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&scale) * v.transpose())
}

/// First canonical pair from precomputed (unnormalised) covariances.
pub fn cca_from_covariances(cov: &Covariances, ridge: f64) -> Result<CanonicalPair> {
    let p = cov.xx.nrows();
    let q = cov.yy.nrows();
    if cov.xx.ncols() != p || cov.yy.ncols() != q || cov.xy.shape() != (p, q) {
        return Err(Error::dim(format!(
            "covariance shapes {:?}, {:?}, {:?} are inconsistent",
            cov.xx.shape(),
            cov.yy.shape(),
            cov.xy.shape()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::invalid(format!("ridge {ridge} must be non-negative")));
    }
    let wx = inverse_sqrt(&regularise(&cov.xx, ridge), "first view")?;
    let wy = inverse_sqrt(&regularise(&cov.yy, ridge), "second view")?;
    let k = &wx * &cov.xy * &wy;
    let svd = k.svd(true, true);
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best });
    let u = svd.u.as_ref().expect("left singular vectors requested").column(idx).into_owned();
    let v = svd.v_t.as_ref().expect("right singular vectors requested").row(idx).transpose();
    let x_weights = wx * u;
    let y_weights = wy * v;
    let correlation = cov.correlation(&x_weights, &y_weights);
    Ok(CanonicalPair {
        x_weights,
        y_weights,
        correlation,
    })
}

/// First canonical pair of two views given as `p × n` and `q × n` matrices.
pub fn cca(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<CanonicalPair> {
    cca_from_covariances(&Covariances::from_views(x, y)?, ridge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn perfectly_related_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random(&mut rng, 4, 200);
        let mix = random(&mut rng, 3, 4);
        let x = &mix * &y;
        let pair = cca(&x, &y, 0.0).unwrap();
        assert!((pair.correlation - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_without_ridge_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = random(&mut rng, 1, 50);
        let x = DMatrix::from_fn(2, 50, |i, j| base[(0, j)] * (i as f64 + 1.0));
        let y = random(&mut rng, 3, 50);
        assert!(matches!(cca(&x, &y, 0.0), Err(Error::Singular(_))));
        assert!(cca(&x, &y, 1e-6).is_ok());
    }

    #[test]
    fn mismatched_observations() {
        let x = DMatrix::zeros(2, 10);
        let y = DMatrix::zeros(2, 11);
        assert!(matches!(cca(&x, &y, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn inverse_sqrt_whitens() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let w = inverse_sqrt(&a, "test").unwrap();
        let id = &w * &a * &w;
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}
