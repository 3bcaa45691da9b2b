//! Eigendata of replacement matrices and the limit laws built from it.
//!
//! Eigendata is normalised so that `u_1 = (1, ..., 1)` and `v_1` is a
//! probability vector, with `V = U^{-1}` (rows of `V` are the left
//! eigenvectors). The built-in YHK and PDA spectra are exact rationals;
//! other matrices go through a floating-point decomposition.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{fmt_q, q, Matrix, QMatrix, Scalar};
use crate::models::Model;
use crate::urn::ReplacementMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData<T: Scalar> {
    /// Descending; `eigenvalues[0]` is the principal eigenvalue `s`.
    pub eigenvalues: Vec<T>,
    /// Right eigenvectors as columns.
    pub u: Matrix<T>,
    /// Left eigenvectors as rows, `V = U^{-1}`.
    pub v: Matrix<T>,
    /// `u_1` is all ones and `v_1` sums to one.
    pub principal_normalized: bool,
}

impl<T: Scalar> SpectralData<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn s(&self) -> &T {
        &self.eigenvalues[0]
    }

    /// `V R U - diag(lambda)`; zero for exact eigendata.
    pub fn residual(&self, r: &Matrix<T>) -> Matrix<T> {
        self.v
            .mul(r)
            .mul(&self.u)
            .sub(&Matrix::diagonal(&self.eigenvalues))
    }

    /// `V U - I`.
    pub fn biorthogonality_defect(&self) -> Matrix<T> {
        self.v.mul(&self.u).sub(&Matrix::identity(self.dim()))
    }
}

/// Exact eigendata for the built-in urns.
pub fn builtin_spectral(model: Model) -> SpectralData<BigRational> {
    match model {
        Model::Yhk => {
            let u = Matrix::from_i64_rows(&[
                [1, 1, -1, -1],
                [1, 0, -1, -3],
                [1, -2, 2, 5],
                [1, 0, 2, 3],
            ]);
            let v = Matrix::from_i64_rows(&[
                [2, 2, 1, 1],
                [2, -2, -2, 2],
                [-4, 2, -2, 4],
                [2, -2, 1, -1],
            ])
            .scale(&q(1, 6));
            SpectralData {
                eigenvalues: [1, 0, -2, -3].iter().map(|&l| q(l, 1)).collect(),
                u,
                v,
                principal_normalized: true,
            }
        }
        Model::Pda => {
            let u = Matrix::from_rows(
                [
                    [q(1, 1), q(5, 2), q(2, 1), q(1, 1), q(1, 1), q(1, 1)],
                    [q(1, 1), q(-2, 1), q(1, 1), q(0, 1), q(1, 1), q(5, 1)],
                    [q(1, 1), q(-8, 1), q(-1, 1), q(1, 1), q(-3, 1), q(-9, 1)],
                    [q(1, 1), q(-1, 1), q(1, 1), q(1, 1), q(-3, 1), q(-5, 1)],
                    [q(1, 1), q(3, 1), q(-1, 1), q(1, 1), q(1, 1), q(5, 1)],
                    [q(1, 1), q(1, 1), q(-1, 1), q(-1, 1), q(1, 1), q(1, 1)],
                ]
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            );
            let v = Matrix::from_i64_rows(&[
                [22, 22, 11, 33, 11, 77],
                [4, -20, -14, 14, 6, 10],
                [30, 26, -17, 17, -43, -13],
                [40, -24, 36, -36, 60, -76],
                [66, -22, 33, -77, -11, 11],
                [-22, 22, -11, 11, 11, -11],
            ])
            .scale(&q(1, 176));
            SpectralData {
                eigenvalues: [2, 0, 0, 0, -2, -4].iter().map(|&l| q(l, 1)).collect(),
                u,
                v,
                principal_normalized: true,
            }
        }
    }
}

/// Numeric eigendecomposition of a replacement matrix.
pub fn diagonalize(r: &ReplacementMatrix) -> Result<SpectralData<f64>> {
    diagonalize_numeric(&r.to_f64())
}

fn scale_of(m: &Matrix<f64>) -> f64 {
    1.0 + m.max_abs()
}

/// Real eigenvalues in descending order, snapped to nearby integers.
pub fn real_eigenvalues(m: &Matrix<f64>) -> Result<Vec<f64>> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::Dimension(format!("{}x{} matrix", m.rows(), m.cols())));
    }
    let scale = scale_of(m);
    let eig = m.to_nalgebra().complex_eigenvalues();
    let mut out = Vec::with_capacity(eig.len());
    for z in eig.iter() {
        if z.im.abs() > 1e-7 * scale {
            return Err(Error::ComplexSpectrum(format!("{:.6}{:+.6}i", z.re, z.im)));
        }
        let rounded = z.re.round();
        out.push(if (z.re - rounded).abs() < 1e-8 * scale {
            rounded
        } else {
            z.re
        });
    }
    out.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    Ok(out)
}

/// Floating-point eigendecomposition with the principal normalisation.
///
/// Eigenvalues that agree to within `1e-6 * scale` are treated as one
/// eigenvalue and get a null-space basis from an SVD; a basis smaller than
/// the multiplicity means the matrix is defective.
pub fn diagonalize_numeric(r: &Matrix<f64>) -> Result<SpectralData<f64>> {
    let d = r.rows();
    let scale = scale_of(r);
    let eig = real_eigenvalues(r)?;

    let mut clusters: Vec<(f64, usize)> = Vec::new();
    for &l in &eig {
        match clusters.last_mut() {
            Some((c, k)) if (*c - l).abs() < 1e-6 * scale => {
                *c = (*c * *k as f64 + l) / (*k as f64 + 1.0);
                *k += 1;
            }
            _ => clusters.push((l, 1)),
        }
    }

    let rn = r.to_nalgebra();
    let mut eigenvalues = Vec::with_capacity(d);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    for &(lambda, mult) in &clusters {
        let shifted = &rn - nalgebra::DMatrix::<f64>::identity(d, d) * lambda;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let tol = 1e-7 * scale * d as f64;
        let null: Vec<usize> = (0..d).filter(|&i| svd.singular_values[i] < tol).collect();
        if null.len() < mult {
            return Err(Error::RankDeficient(format!(
                "eigenvalue {lambda} has multiplicity {mult} but only {} eigenvectors",
                null.len()
            )));
        }
        // Smallest singular values first, in case the tolerance admits extras.
        let mut null = null;
        null.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
        for &i in null.iter().take(mult) {
            let mut col: Vec<f64> = vt.row(i).iter().copied().collect();
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            for x in col.iter_mut() {
                *x /= pivot;
            }
            columns.push(col);
            eigenvalues.push(lambda);
        }
    }

    let mut u = Matrix::zeros(d, d);
    for (j, col) in columns.iter().enumerate() {
        for i in 0..d {
            u.set(i, j, col[i]);
        }
    }
    // Principal normalisation: u_1 proportional to the ones vector.
    let u1 = u.col(0);
    let principal_normalized = u1.iter().all(|&x| (x - u1[0]).abs() < 1e-8 * u1[0].abs().max(1e-300));
    if principal_normalized {
        for i in 0..d {
            u.set(i, 0, 1.0);
        }
    }
    let v = u
        .inverse()
        .ok_or_else(|| Error::RankDeficient("eigenvector matrix is singular".into()))?;
    let sd = SpectralData {
        eigenvalues,
        u,
        v,
        principal_normalized,
    };
    let res = sd.residual(r).max_abs();
    if res > 1e-8 * scale {
        return Err(Error::RankDeficient(format!("decomposition residual {res:e}")));
    }
    Ok(sd)
}

/// `(s, v_1)`; the urn composition satisfies `C_n / n -> s v_1`.
pub fn limit_vector<T: Scalar>(sd: &SpectralData<T>) -> (T, Vec<T>) {
    (sd.s().clone(), sd.v.row(0).to_vec())
}

/// `s v_1`, the per-step growth of each colour in the limit.
pub fn limit_rate<T: Scalar>(sd: &SpectralData<T>) -> Vec<T> {
    let (s, v1) = limit_vector(sd);
    v1.into_iter().map(|x| x * s.clone()).collect()
}

/// Covariance of the Gaussian limit of `(C_n - n s v_1) / sqrt(n)`:
/// `sum_{i,j >= 2} s l_i l_j (u_i' diag(v_1) u_j) / (s - l_i - l_j) v_i' v_j`.
pub fn sigma<T: Scalar>(sd: &SpectralData<T>) -> Result<Matrix<T>> {
    let d = sd.dim();
    let s = sd.s().clone();
    let v1 = sd.v.row(0).to_vec();
    let cols: Vec<Vec<T>> = (0..d).map(|j| sd.u.col(j)).collect();
    let mut out = Matrix::<T>::zeros(d, d);
    for i in 1..d {
        for j in 1..d {
            let li = sd.eigenvalues[i].clone();
            let lj = sd.eigenvalues[j].clone();
            if li.is_zero() || lj.is_zero() {
                continue;
            }
            let den = s.clone() - li.clone() - lj.clone();
            if den.abs().to_f64() < 1e-12 {
                return Err(Error::DivisionGuard(format!(
                    "s - l_{} - l_{} vanishes",
                    i + 1,
                    j + 1
                )));
            }
            let mut quad = T::zero();
            for k in 0..d {
                quad = quad + cols[i][k].clone() * v1[k].clone() * cols[j][k].clone();
            }
            let coef = s.clone() * li * lj * quad / den;
            if coef.is_zero() {
                continue;
            }
            let vi = sd.v.row(i);
            let vj = sd.v.row(j);
            for a in 0..d {
                for b in 0..d {
                    let add = coef.clone() * vi[a].clone() * vj[b].clone();
                    out.set(a, b, out[(a, b)].clone() + add);
                }
            }
        }
    }
    Ok(out)
}

/// Covariance of `(A, B) = (x_1 / 2, (x_1 + x_2) / 2)`.
pub fn project_ab<T: Scalar>(sigma: &Matrix<T>) -> Result<Matrix<T>> {
    let l = ab_map::<T>(sigma.rows())?;
    if !sigma.is_square() {
        return Err(Error::Dimension("covariance must be square".into()));
    }
    Ok(l.mul(sigma).mul(&l.transpose()))
}

/// The 2 x d map from an edge-type vector to `(A, B)`.
pub fn ab_map<T: Scalar>(d: usize) -> Result<Matrix<T>> {
    if d < 2 {
        return Err(Error::Dimension(format!("need at least 2 edge types, got {d}")));
    }
    let half = T::one() / T::from_i64(2);
    let mut l = Matrix::zeros(2, d);
    l.set(0, 0, half.clone());
    l.set(1, 0, half.clone());
    l.set(1, 1, half);
    Ok(l)
}

/// Limit law of the normalised composition.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitLaw<T: Scalar> {
    pub s: T,
    pub v1: Vec<T>,
    pub sigma: Matrix<T>,
}

pub fn limit_law<T: Scalar>(sd: &SpectralData<T>) -> Result<LimitLaw<T>> {
    let (s, v1) = limit_vector(sd);
    Ok(LimitLaw {
        s,
        v1,
        sigma: sigma(sd)?,
    })
}

/// Exact limit law of a built-in model.
pub fn builtin_limit_law(model: Model) -> LimitLaw<BigRational> {
    limit_law(&builtin_spectral(model)).expect("built-in spectra satisfy the gap condition")
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub model: String,
    pub exact: bool,
    pub eigenvalues: Vec<String>,
    pub u: Vec<Vec<String>>,
    pub v: Vec<Vec<String>>,
    pub s: String,
    pub v1: Vec<String>,
    pub limit_rate: Vec<String>,
    pub sigma: Vec<Vec<String>>,
    pub sigma_ab: Vec<Vec<String>>,
    pub residual: f64,
    pub biorthogonality_defect: f64,
}

fn strings_q(m: &QMatrix) -> Vec<Vec<String>> {
    m.to_strings()
}

fn strings_f(m: &Matrix<f64>) -> Vec<Vec<String>> {
    m.to_rows()
        .into_iter()
        .map(|r| r.into_iter().map(|x| format!("{x:.12e}")).collect())
        .collect()
}

impl SpectralReport {
    pub fn exact(model: Model) -> Self {
        let sd = builtin_spectral(model);
        let law = limit_law(&sd).expect("gap condition");
        let r = model.replacement().to_qmatrix();
        SpectralReport {
            model: model.name().into(),
            exact: true,
            eigenvalues: sd.eigenvalues.iter().map(fmt_q).collect(),
            u: strings_q(&sd.u),
            v: strings_q(&sd.v),
            s: fmt_q(&law.s),
            v1: law.v1.iter().map(fmt_q).collect(),
            limit_rate: limit_rate(&sd).iter().map(fmt_q).collect(),
            sigma_ab: strings_q(&project_ab(&law.sigma).expect("d >= 2")),
            sigma: strings_q(&law.sigma),
            residual: sd.residual(&r).max_abs(),
            biorthogonality_defect: sd.biorthogonality_defect().max_abs(),
        }
    }

    pub fn numeric(name: &str, r: &ReplacementMatrix) -> Result<Self> {
        let sd = diagonalize(r)?;
        let law = limit_law(&sd)?;
        let f = |x: &f64| format!("{x:.12e}");
        let sigma_ab: Vec<Vec<String>> = if sd.dim() >= 2 {
            strings_f(&project_ab(&law.sigma)?)
        } else {
            Vec::new()
        };
        Ok(SpectralReport {
            model: name.into(),
            exact: false,
            eigenvalues: sd.eigenvalues.iter().map(f).collect(),
            u: strings_f(&sd.u),
            v: strings_f(&sd.v),
            s: f(&law.s),
            v1: law.v1.iter().map(f).collect(),
            limit_rate: limit_rate(&sd).iter().map(f).collect(),
            sigma: strings_f(&law.sigma),
            sigma_ab,
            residual: sd.residual(&r.to_f64()).max_abs(),
            biorthogonality_defect: sd.biorthogonality_defect().max_abs(),
        })
    }
}

/// Rational helper: is every entry of `m` exactly zero?
pub fn is_zero_matrix(m: &QMatrix) -> bool {
    m.to_rows().iter().flatten().all(Zero::is_zero)
}

/// Rational helper: `m * (1, ..., 1)'`.
pub fn row_sums_q(m: &QMatrix) -> Vec<BigRational> {
    m.to_rows()
        .into_iter()
        .map(|r| r.into_iter().fold(BigRational::zero(), |a, b| a + b))
        .collect()
}

/// Rational helper: the all-ones vector.
pub fn ones_q(d: usize) -> Vec<BigRational> {
    vec![BigRational::one(); d]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qm(rows: &[&[i64]], den: i64) -> QMatrix {
        Matrix::from_i64_rows(rows).scale(&q(1, den))
    }

    const YHK_SIGMA: [&[i64]; 4] = [
        &[276, -388, 138, -26],
        &[-388, 724, -194, -142],
        &[138, -194, 69, -13],
        &[-26, -142, -13, 181],
    ];
    const PDA_SIGMA: [&[i64]; 6] = [
        &[12, -12, 6, -6, -6, 6],
        &[-12, 28, -6, -10, 14, -14],
        &[6, -6, 3, -3, -3, 3],
        &[-6, -10, -3, 19, -5, 5],
        &[-6, 14, -3, -5, 7, -7],
        &[6, -14, 3, 5, -7, 7],
    ];

    #[test]
    fn builtin_decompositions_are_exact() {
        for model in [Model::Yhk, Model::Pda] {
            let sd = builtin_spectral(model);
            let r = model.replacement().to_qmatrix();
            assert!(is_zero_matrix(&sd.residual(&r)), "{model:?}");
            assert!(is_zero_matrix(&sd.biorthogonality_defect()), "{model:?}");
            assert!(sd.u.col(0).iter().all(|x| x.is_one()));
            let v1 = sd.v.row(0);
            assert!(v1.iter().all(|x| *x >= BigRational::zero()));
            assert!(v1.iter().fold(BigRational::zero(), |a, b| a + b).is_one());
        }
    }

    #[test]
    fn principal_vectors() {
        let (s, v1) = limit_vector(&builtin_spectral(Model::Yhk));
        assert_eq!(s, q(1, 1));
        assert_eq!(v1, vec![q(2, 6), q(2, 6), q(1, 6), q(1, 6)]);
        let sd = builtin_spectral(Model::Pda);
        let (s, v1) = limit_vector(&sd);
        assert_eq!(s, q(2, 1));
        assert_eq!(v1, [2, 2, 1, 3, 1, 7].iter().map(|&x| q(x, 16)).collect::<Vec<_>>());
        let rate = limit_rate(&sd);
        assert_eq!(rate, [4, 4, 2, 6, 2, 14].iter().map(|&x| q(x, 16)).collect::<Vec<_>>());
        assert_eq!(rate.iter().fold(BigRational::zero(), |a, b| a + b), q(2, 1));
    }

    #[test]
    fn sigma_matrices() {
        let y = builtin_limit_law(Model::Yhk).sigma;
        assert_eq!(y, qm(&YHK_SIGMA, 1260));
        let p = builtin_limit_law(Model::Pda).sigma;
        assert_eq!(p, qm(&PDA_SIGMA, 64));
        for m in [&y, &p] {
            assert!(m.is_symmetric());
            assert!(row_sums_q(m).iter().all(Zero::is_zero));
        }
    }

    #[test]
    fn ab_projections() {
        let y = project_ab(&builtin_limit_law(Model::Yhk).sigma).unwrap();
        assert_eq!(y, qm(&[&[69, -28], &[-28, 56]], 1260));
        let p = project_ab(&builtin_limit_law(Model::Pda).sigma).unwrap();
        assert_eq!(p, qm(&[&[3, 0], &[0, 4]], 64));
        // Exact-moment limits for YHK.
        assert_eq!(y[(0, 0)], q(23, 420));
        assert_eq!(y[(1, 1)], q(2, 45));
        assert_eq!(y[(0, 1)], q(-1, 45));
        let z: QMatrix = Matrix::zeros(4, 4);
        assert!(is_zero_matrix(&project_ab(&z).unwrap()));
        assert!(project_ab(&Matrix::<f64>::zeros(1, 1)).is_err());
    }

    #[test]
    fn numeric_matches_exact() {
        for model in [Model::Yhk, Model::Pda] {
            let sd = diagonalize(&model.replacement()).unwrap();
            let exact = builtin_spectral(model);
            for (a, b) in sd.eigenvalues.iter().zip(&exact.eigenvalues) {
                assert!((a - b.to_f64()).abs() < 1e-10);
            }
            assert!(sd.principal_normalized);
            assert!(sd.biorthogonality_defect().max_abs() < 1e-10);
            let ns = sigma(&sd).unwrap();
            let es = sigma(&exact).unwrap().to_f64();
            assert!(ns.sub(&es).max_abs() < 1e-9, "{model:?}");
            let (_, v1) = limit_vector(&sd);
            for (a, b) in v1.iter().zip(exact.v.row(0)) {
                assert!((a - b.to_f64()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn numeric_edge_cases() {
        let diag = ReplacementMatrix::from_rows(&[[3, 0], [0, 1]]).unwrap();
        let sd = diagonalize(&diag).unwrap();
        assert_eq!(sd.eigenvalues, vec![3.0, 1.0]);
        assert!(!sd.principal_normalized);

        let one = ReplacementMatrix::identity(1);
        let sd = diagonalize(&one).unwrap();
        let (s, v1) = limit_vector(&sd);
        assert_eq!((s, v1), (1.0, vec![1.0]));
        assert_eq!(sigma(&sd).unwrap().max_abs(), 0.0);

        let rot = ReplacementMatrix::from_rows(&[[0, 1], [-1, 0]]).unwrap();
        assert!(matches!(diagonalize(&rot), Err(Error::ComplexSpectrum(_))));
        let jordan = ReplacementMatrix::from_rows(&[[1, 1], [0, 1]]).unwrap();
        assert!(matches!(diagonalize(&jordan), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn sigma_is_psd_numerically() {
        for model in [Model::Yhk, Model::Pda] {
            let s = builtin_limit_law(model).sigma.to_f64().to_nalgebra();
            let eig = s.symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
        }
    }

    #[test]
    fn reports_serialise() {
        let r = SpectralReport::exact(Model::Pda);
        assert_eq!(r.v1[3], "3/16");
        assert_eq!(r.sigma_ab[1][1], "1/16");
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"exact\":true"));
        let n = SpectralReport::numeric("yhk", &ReplacementMatrix::yhk()).unwrap();
        assert!(n.residual < 1e-10);
    }
}
