use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location on the (normalized) pitch.
pub type Point = [f64; 2];

/// Smallest eigenvalue any role covariance is allowed to reach.
pub const COV_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Symmetric 2×2 matrix helpers, stored as `[[a, b], [b, c]]`.
pub mod sym2 {
    pub type Mat = [[f64; 2]; 2];

    pub fn det(m: &Mat) -> f64 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(m: &Mat) -> f64 {
        m[0][0] + m[1][1]
    }

    /// Eigenvalues in ascending order of a symmetric matrix.
    pub fn eigenvalues(m: &Mat) -> (f64, f64) {
        let half_tr = 0.5 * (m[0][0] + m[1][1]);
        let half_diff = 0.5 * (m[0][0] - m[1][1]);
        let r = (half_diff * half_diff + m[0][1] * m[0][1]).sqrt();
        (half_tr - r, half_tr + r)
    }

    pub fn inverse(m: &Mat) -> Option<Mat> {
        let det = det(m);
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
    }

    pub fn add(a: &Mat, b: &Mat) -> Mat {
        [
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ]
    }

    pub fn scale(a: &Mat, s: f64) -> Mat {
        [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
    }

    pub fn mul(a: &Mat, b: &Mat) -> Mat {
        [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ]
    }

    /// Principal square root of a symmetric positive semi-definite matrix:
    /// `sqrt(M) = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))`.
    pub fn sqrt_psd(m: &Mat) -> Mat {
        let s = det(m).max(0.0).sqrt();
        let t = (trace(m) + 2.0 * s).max(0.0).sqrt();
        if t == 0.0 {
            return [[0.0; 2]; 2];
        }
        [[(m[0][0] + s) / t, m[0][1] / t], [m[1][0] / t, (m[1][1] + s) / t]]
    }

    /// `xᵀ M x` for a 2-vector.
    pub fn quad_form(m: &Mat, x: &[f64; 2]) -> f64 {
        m[0][0] * x[0] * x[0] + (m[0][1] + m[1][0]) * x[0] * x[1] + m[1][1] * x[1] * x[1]
    }
}

/// Symmetrize and lift the spectrum so that the smallest eigenvalue is at
/// least [`COV_FLOOR`].
pub fn regularize_cov(sigma: &sym2::Mat) -> sym2::Mat {
    let b = 0.5 * (sigma[0][1] + sigma[1][0]);
    let mut out = [[sigma[0][0], b], [b, sigma[1][1]]];
    let (lo, _) = sym2::eigenvalues(&out);
    if lo < COV_FLOOR {
        let lift = COV_FLOOR - lo;
        out[0][0] += lift;
        out[1][1] += lift;
    }
    out
}

/// Bivariate normal distribution describing the area covered by one role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleGaussian {
    pub mu: Point,
    pub sigma: sym2::Mat,
}

impl RoleGaussian {
    pub fn new(mu: Point, sigma: sym2::Mat) -> Self {
        Self { mu, sigma }
    }

    pub fn standard(mu: Point) -> Self {
        Self::new(mu, [[1.0, 0.0], [0.0, 1.0]])
    }

    /// Copy with the covariance passed through [`regularize_cov`].
    pub fn regularized(&self) -> Self {
        Self::new(self.mu, regularize_cov(&self.sigma))
    }

    pub fn prepare(&self) -> Result<PreparedGaussian> {
        PreparedGaussian::new(self)
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|v| v.is_finite()) && self.sigma.iter().flatten().all(|v| v.is_finite())
    }
}

/// A role Gaussian with its precision matrix and normalizing constant cached.
#[derive(Clone, Debug)]
pub struct PreparedGaussian {
    mu: Point,
    precision: sym2::Mat,
    log_norm: f64,
}

impl PreparedGaussian {
    pub fn new(g: &RoleGaussian) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::Numeric("non-finite Gaussian parameters".into()));
        }
        let sigma = regularize_cov(&g.sigma);
        let precision = sym2::inverse(&sigma)
            .ok_or_else(|| Error::Numeric(format!("covariance {sigma:?} is not positive definite")))?;
        let log_norm = -LN_2PI - 0.5 * sym2::det(&sigma).ln();
        if !log_norm.is_finite() {
            return Err(Error::Numeric("covariance determinant out of range".into()));
        }
        Ok(Self {
            mu: g.mu,
            precision,
            log_norm,
        })
    }

    #[inline]
    pub fn logpdf(&self, x: &Point) -> f64 {
        let d = [x[0] - self.mu[0], x[1] - self.mu[1]];
        self.log_norm - 0.5 * sym2::quad_form(&self.precision, &d)
    }
}

/// Log-density of a bivariate normal at `x`.
pub fn gaussian_logpdf(x: &Point, g: &RoleGaussian) -> Result<f64> {
    Ok(g.prepare()?.logpdf(x))
}

/// One Gaussian per role; the team's spatial structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    pub roles: Vec<RoleGaussian>,
}

impl Formation {
    pub fn new(roles: Vec<RoleGaussian>) -> Self {
        Self { roles }
    }

    pub fn d(&self) -> usize {
        self.roles.len()
    }

    pub fn prepare(&self) -> Result<PreparedFormation> {
        Ok(PreparedFormation {
            roles: self.roles.iter().map(|r| r.prepare()).collect::<Result<_>>()?,
        })
    }

    pub fn means(&self) -> Vec<Point> {
        self.roles.iter().map(|r| r.mu).collect()
    }

    /// Reorder roles so that new role `k` is old role `order[k]`.
    pub fn relabeled(&self, order: &[usize]) -> Self {
        Self::new(order.iter().map(|&k| self.roles[k].clone()).collect())
    }
}

#[derive(Clone, Debug)]
pub struct PreparedFormation {
    pub roles: Vec<PreparedGaussian>,
}

impl PreparedFormation {
    /// `sum_k log N(y_k; mu_k, Sigma_k)`.
    pub fn frame_log_density(&self, y: &[Point]) -> f64 {
        debug_assert_eq!(y.len(), self.roles.len());
        self.roles.iter().zip(y).map(|(g, x)| g.logpdf(x)).sum()
    }

    /// `table[l * d + k] = log N(y_l; role k)`.
    pub fn log_density_table(&self, y: &[Point], table: &mut Vec<f64>) {
        let d = self.roles.len();
        table.clear();
        table.reserve(d * d);
        for x in y {
            for g in &self.roles {
                table.push(g.logpdf(x));
            }
        }
    }
}

/// Log-density of a full frame under a formation with the identity assignment.
pub fn frame_log_density(y: &[Point], f: &Formation) -> Result<f64> {
    if y.len() != f.d() {
        return Err(Error::ContractViolation(format!(
            "frame has {} players, formation has {} roles",
            y.len(),
            f.d()
        )));
    }
    Ok(f.prepare()?.frame_log_density(y))
}

/// Per-row mean and (population) covariance of a set of points.
pub fn empirical_moments<'a, I>(points: I) -> Option<RoleGaussian>
where
    I: IntoIterator<Item = &'a Point>,
    I::IntoIter: Clone,
{
    let iter = points.into_iter();
    let mut n = 0usize;
    let mut mu = [0.0; 2];
    for p in iter.clone() {
        mu[0] += p[0];
        mu[1] += p[1];
        n += 1;
    }
    if n == 0 {
        return None;
    }
    mu[0] /= n as f64;
    mu[1] /= n as f64;
    let mut s = [[0.0; 2]; 2];
    for p in iter {
        let d = [p[0] - mu[0], p[1] - mu[1]];
        s[0][0] += d[0] * d[0];
        s[0][1] += d[0] * d[1];
        s[1][1] += d[1] * d[1];
    }
    let inv = 1.0 / n as f64;
    let sigma = [[s[0][0] * inv, s[0][1] * inv], [s[0][1] * inv, s[1][1] * inv]];
    Some(RoleGaussian::new(mu, regularize_cov(&sigma)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn standard_normal_at_mode() {
        let g = RoleGaussian::standard([0.0, 0.0]);
        let v = gaussian_logpdf(&[0.0, 0.0], &g).unwrap();
        assert_abs_diff_eq!(v, -(2.0 * PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, -1.837_877, epsilon = 1e-6);
        let v1 = gaussian_logpdf(&[1.0, 0.0], &g).unwrap();
        assert_abs_diff_eq!(v1, v - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn anisotropic_against_hand_formula() {
        // diag(4, 1), x = (2, 1): quadratic form 4/4 + 1/1 = 2, det = 4.
        let g = RoleGaussian::new([0.0, 0.0], [[4.0, 0.0], [0.0, 1.0]]);
        let expected = -(2.0 * PI).ln() - 0.5 * 4f64.ln() - 0.5 * 2.0;
        assert_abs_diff_eq!(gaussian_logpdf(&[2.0, 1.0], &g).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn frame_density_sums_roles() {
        let f = Formation::new(vec![RoleGaussian::standard([0.0, 0.0]); 2]);
        let v = frame_log_density(&[[0.0, 0.0], [0.0, 0.0]], &f).unwrap();
        assert_abs_diff_eq!(v, 2.0 * (1.0 / (2.0 * PI)).ln(), epsilon = 1e-12);

        let y = [[0.3, -1.0], [2.0, 0.5]];
        let swapped = [y[1], y[0]];
        assert_abs_diff_eq!(
            frame_log_density(&y, &f).unwrap(),
            frame_log_density(&swapped, &f).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn frame_density_matches_naive_product() {
        let f = Formation::new(vec![
            RoleGaussian::new([0.1, 0.2], [[1.5, 0.3], [0.3, 0.7]]),
            RoleGaussian::new([-1.0, 0.4], [[0.4, -0.1], [-0.1, 0.9]]),
            RoleGaussian::new([2.0, -0.5], [[2.0, 0.0], [0.0, 0.5]]),
        ]);
        let y = [[0.0, 0.0], [-0.7, 1.1], [1.4, -0.9]];
        let mut product = 1.0;
        for (x, r) in y.iter().zip(&f.roles) {
            let s = r.sigma;
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let dx = x[0] - r.mu[0];
            let dy = x[1] - r.mu[1];
            let q = (s[1][1] * dx * dx - 2.0 * s[0][1] * dx * dy + s[0][0] * dy * dy) / det;
            product *= (-0.5 * q).exp() / (2.0 * PI * det.sqrt());
        }
        assert_abs_diff_eq!(frame_log_density(&y, &f).unwrap(), product.ln(), epsilon = 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let g = RoleGaussian::new([0.3, -0.2], [[0.8, 0.25], [0.25, 0.5]])
            .prepare()
            .unwrap();
        let h = 0.02;
        let mut total = 0.0;
        let mut x = -8.0;
        while x <= 8.0 {
            let mut y = -8.0;
            while y <= 8.0 {
                total += g.logpdf(&[x, y]).exp() * h * h;
                y += h;
            }
            x += h;
        }
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn floor_applies_to_singular_covariance() {
        let r = regularize_cov(&[[0.0, 0.0], [0.0, 0.0]]);
        assert_eq!(r, [[COV_FLOOR, 0.0], [0.0, COV_FLOOR]]);
        let g = RoleGaussian::new([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]]);
        assert!(gaussian_logpdf(&[0.0, 0.0], &g).unwrap().is_finite());
        let bad = RoleGaussian::new([f64::NAN, 0.0], [[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(gaussian_logpdf(&[0.0, 0.0], &bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = [[2.0, 0.7], [0.7, 1.3]];
        let r = sym2::sqrt_psd(&m);
        let back = sym2::mul(&r, &r);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(back[i][j], m[i][j], epsilon = 1e-12);
            }
        }
    }

    fn rotate(theta: f64, x: Point) -> Point {
        let (s, c) = theta.sin_cos();
        [c * x[0] - s * x[1], s * x[0] + c * x[1]]
    }

    proptest! {
        #[test]
        fn logpdf_rotation_invariant(
            theta in 0.0..(2.0 * PI),
            mx in -3.0..3.0f64, my in -3.0..3.0f64,
            x0 in -3.0..3.0f64, x1 in -3.0..3.0f64,
            l1 in 0.1..4.0f64, l2 in 0.1..4.0f64, phi in 0.0..PI,
        ) {
            let (s, c) = phi.sin_cos();
            let rot = [[c, -s], [s, c]];
            let rot_t = [[c, s], [-s, c]];
            let sigma = sym2::mul(&sym2::mul(&rot, &[[l1, 0.0], [0.0, l2]]), &rot_t);
            let g = RoleGaussian::new([mx, my], sigma);
            let base = gaussian_logpdf(&[x0, x1], &g).unwrap();

            let (s, c) = theta.sin_cos();
            let r = [[c, -s], [s, c]];
            let r_t = [[c, s], [-s, c]];
            let g_rot = RoleGaussian::new(rotate(theta, [mx, my]), sym2::mul(&sym2::mul(&r, &sigma), &r_t));
            let rotated = gaussian_logpdf(&rotate(theta, [x0, x1]), &g_rot).unwrap();
            prop_assert!((base - rotated).abs() < 1e-9);
        }
    }
}
