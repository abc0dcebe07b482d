//! Skew-symmetric bilinear forms and their Euclidean normal form.
//!
//! For a nondegenerate skew matrix `A` the Hermitian matrix `iA` has real
//! spectrum `{±α_j}`. A unit eigenvector `w = a + ib` of `+α_j` has
//! `|a| = |b|` and `a ⊥ b`, and `u_j = √2·a`, `v_j = −√2·b` form an
//! orthonormal pair with `ω(u_j, v_j) = α_j`. Collecting the pairs gives an
//! orthogonal `U` with `UᵀAU = diag(α_1 J₂, …, α_n J₂)`.

use nalgebra::{Complex, ComplexField, DMatrix, DVector, RealField, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default nondegeneracy tolerance, relative to the spectral norm.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Relative asymmetry accepted (and removed) on construction.
pub const SYMMETRIZE_TOL: f64 = 1e-12;
/// Eigenvalues closer than this (relative to `max(1, ‖A‖)`) form a cluster.
pub const CLUSTER_GAP: f64 = 1e-8;
/// Largest accepted reconstruction residual, relative to `max(1, ‖A‖)`.
pub const RESIDUAL_TOL: f64 = 1e-9;

fn lit<T: RealField + Copy>(x: f64) -> T {
    nalgebra::convert(x)
}

/// `ω(u, v) = uᵀAv` on `R^{2n}`; only the strict upper triangle is stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormRepr<T>", into = "FormRepr<T>")]
#[serde(bound(
    serialize = "T: RealField + Copy + Serialize",
    deserialize = "T: RealField + Copy + Deserialize<'de>"
))]
pub struct SkewForm<T> {
    dim: usize,
    upper: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct FormRepr<T> {
    dim: usize,
    upper: Vec<T>,
}

impl<T: RealField + Copy> TryFrom<FormRepr<T>> for SkewForm<T> {
    type Error = Error;
    fn try_from(r: FormRepr<T>) -> Result<Self> {
        SkewForm::from_upper(r.dim, r.upper)
    }
}

impl<T: RealField + Copy> From<SkewForm<T>> for FormRepr<T> {
    fn from(f: SkewForm<T>) -> Self {
        FormRepr { dim: f.dim, upper: f.upper }
    }
}

/// Outcome of [`SkewForm::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Validation<T> {
    pub ok: bool,
    pub min_singular_value: T,
}

/// Sorted parameters and the orthogonal basis `(u₁, v₁, …, u_n, v_n)` as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalForm<T: RealField> {
    pub alphas: Vec<T>,
    pub basis: DMatrix<T>,
    /// `‖UᵀAU − diag(α_j J₂)‖_max` measured after construction.
    pub residual: T,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Structural(format!(
            "a symplectic vector space has even positive dimension, got {dim}"
        )));
    }
    Ok(())
}

impl<T: RealField + Copy> SkewForm<T> {
    pub fn from_upper(dim: usize, upper: Vec<T>) -> Result<Self> {
        check_dim(dim)?;
        if upper.len() != dim * (dim - 1) / 2 {
            return Err(Error::input(format!(
                "a {dim}×{dim} skew form has {} strict upper entries, got {}",
                dim * (dim - 1) / 2,
                upper.len()
            )));
        }
        if upper.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("skew form has non-finite entries"));
        }
        Ok(SkewForm { dim, upper })
    }

    /// Accepts a dense matrix that is skew up to `1e−12·‖A‖` and
    /// skew-symmetrizes it; anything less antisymmetric is rejected.
    pub fn from_matrix(a: &DMatrix<T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Structural(format!("form matrix is {}×{}", a.nrows(), a.ncols())));
        }
        check_dim(a.nrows())?;
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("skew form has non-finite entries"));
        }
        let sym = a + a.transpose();
        let scale = a.amax();
        let asym = sym.amax();
        if asym > lit::<T>(SYMMETRIZE_TOL) * scale {
            return Err(Error::input(format!("matrix is not skew-symmetric: max|A + Aᵀ| = {asym}")));
        }
        let dim = a.nrows();
        let half = lit::<T>(0.5);
        let mut upper = Vec::with_capacity(dim * (dim - 1) / 2);
        for i in 0..dim {
            for j in i + 1..dim {
                upper.push(half * (a[(i, j)] - a[(j, i)]));
            }
        }
        Ok(SkewForm { dim, upper })
    }

    /// `diag(α₁J₂, …, α_nJ₂)` with the parameters sorted ascending.
    pub fn standard_matrix(alphas: &[T]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::input("need at least one parameter"));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a > T::zero())) {
            return Err(Error::input("standard form parameters must be positive"));
        }
        let mut sorted = alphas.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let dim = 2 * sorted.len();
        let mut m = DMatrix::zeros(dim, dim);
        for (j, &a) in sorted.iter().enumerate() {
            m[(2 * j, 2 * j + 1)] = a;
            m[(2 * j + 1, 2 * j)] = -a;
        }
        Self::from_matrix(&m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn matrix(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut k = 0;
        for i in 0..self.dim {
            for j in i + 1..self.dim {
                m[(i, j)] = self.upper[k];
                m[(j, i)] = -self.upper[k];
                k += 1;
            }
        }
        m
    }

    pub fn eval(&self, u: &DVector<T>, v: &DVector<T>) -> T {
        u.dot(&(self.matrix() * v))
    }

    /// Nondegeneracy check: `ok` iff the smallest singular value is `≥ tol`.
    pub fn validate(&self, tol: T) -> Validation<T> {
        let sv = self.matrix().svd(false, false).singular_values;
        let min = sv.iter().copied().fold(T::max_value().expect("bounded"), |m, x| m.min(x));
        Validation { ok: min >= tol, min_singular_value: min }
    }

    fn spectral_scale(&self) -> T {
        let m = self.matrix();
        if m.iter().all(|x| *x == T::zero()) {
            return T::zero();
        }
        m.svd(false, false).singular_values.max()
    }

    /// Orthogonal normal form via the Hermitian eigenproblem of `iA`.
    pub fn normalize(&self) -> Result<NormalForm<T>> {
        let scale = self.spectral_scale();
        let check = self.validate(lit::<T>(DEFAULT_TOL) * scale);
        if scale == T::zero() || !check.ok {
            return Err(Error::Structural(format!(
                "degenerate form: smallest singular value {} (norm {})",
                check.min_singular_value, scale
            )));
        }
        let a = self.matrix();
        let dim = self.dim;
        let n = dim / 2;
        let herm: DMatrix<Complex<T>> = a.map(|x| Complex::new(T::zero(), x));
        let eps = T::default_epsilon();
        let eig = SymmetricEigen::try_new(herm, eps, 10_000)
            .ok_or_else(|| Error::numeric("Hermitian eigensolver did not converge", f64::NAN))?;

        let mut order: Vec<usize> = (0..dim).filter(|&k| eig.eigenvalues[k] > T::zero()).collect();
        if order.len() != n {
            return Err(Error::numeric(
                format!("expected {n} positive eigenvalues of iA, found {}", order.len()),
                f64::NAN,
            ));
        }
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).expect("finite"));
        let alphas: Vec<T> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vecs: Vec<DVector<Complex<T>>> = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();

        // Clusters of (nearly) repeated parameters: any orthonormal basis of the
        // eigenspace is valid; re-orthonormalize in index order for determinism.
        let gap = lit::<T>(CLUSTER_GAP) * scale.max(T::one());
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && alphas[end] - alphas[end - 1] < gap {
                end += 1;
            }
            if end - start > 1 {
                orthonormalize(&mut vecs[start..end]);
            }
            start = end;
        }

        let sqrt2 = lit::<T>(2.0).sqrt();
        let mut basis = DMatrix::zeros(dim, dim);
        for (j, w) in vecs.iter_mut().enumerate() {
            fix_phase(w);
            let mut u = w.map(|c| c.re * sqrt2);
            let mut v = w.map(|c| -c.im * sqrt2);
            u.normalize_mut();
            v.normalize_mut();
            basis.set_column(2 * j, &u);
            basis.set_column(2 * j + 1, &v);
        }

        let residual = block_residual(&a, &basis, &alphas);
        let tol = lit::<T>(RESIDUAL_TOL) * scale.max(T::one());
        let ortho = (basis.transpose() * &basis - DMatrix::identity(dim, dim)).amax();
        if residual > tol || ortho > tol {
            let r = nalgebra::try_convert::<T, f64>(residual.max(ortho)).unwrap_or(f64::NAN);
            return Err(Error::numeric("normal form reconstruction failed", r));
        }
        Ok(NormalForm { alphas, basis, residual })
    }

    /// `(p₁, q₁, …, p_n, q_n)` with `ω(p_i, q_j) = δ_ij`, `ω(p_i, p_j) = ω(q_i, q_j) = 0`.
    pub fn symplectic_basis(&self) -> Result<Vec<DVector<T>>> {
        let nf = self.normalize()?;
        let mut out = Vec::with_capacity(self.dim);
        for (j, &a) in nf.alphas.iter().enumerate() {
            let s = a.sqrt();
            out.push(nf.basis.column(2 * j).into_owned() / s);
            out.push(nf.basis.column(2 * j + 1).into_owned() / s);
        }
        Ok(out)
    }
}

/// `max|UᵀAU − diag(α_j J₂)|`.
pub fn block_residual<T: RealField + Copy>(a: &DMatrix<T>, basis: &DMatrix<T>, alphas: &[T]) -> T {
    let mut r = basis.transpose() * a * basis;
    for (j, &al) in alphas.iter().enumerate() {
        r[(2 * j, 2 * j + 1)] -= al;
        r[(2 * j + 1, 2 * j)] += al;
    }
    r.amax()
}

/// Modified Gram–Schmidt on complex vectors, in order.
fn orthonormalize<T: RealField + Copy>(vs: &mut [DVector<Complex<T>>]) {
    for i in 0..vs.len() {
        for j in 0..i {
            let (head, tail) = vs.split_at_mut(i);
            let proj = head[j].dotc(&tail[0]);
            tail[0] -= &head[j] * proj;
        }
        let norm = vs[i].norm();
        vs[i] /= Complex::new(norm, T::zero());
    }
}

/// Rotates `w` so that its first non-negligible component is real and positive.
fn fix_phase<T: RealField + Copy>(w: &mut DVector<Complex<T>>) {
    let max = w.iter().map(|c| c.modulus()).fold(T::zero(), |m, x| m.max(x));
    let cut = max * lit::<T>(1e-8);
    if let Some(c) = w.iter().find(|c| c.modulus() > cut).copied() {
        let phase = c.conj() / Complex::new(c.modulus(), T::zero());
        *w *= phase;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn j2(s: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, s, -s, 0.0])
    }

    /// Random orthogonal matrix from QR of a Gaussian-ish matrix.
    pub(crate) fn random_rotation(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }

    #[test]
    fn validate_examples() {
        let f = SkewForm::from_matrix(&j2(1.0)).unwrap();
        let v = f.validate(1e-12);
        assert!(v.ok);
        assert!((v.min_singular_value - 1.0).abs() < 1e-15);
        let zero = SkewForm::from_matrix(&DMatrix::<f64>::zeros(2, 2)).unwrap();
        assert!(!zero.validate(1e-12).ok);
        assert!(zero.normalize().is_err());
        let near = SkewForm::standard_matrix(&[1.0, 1e-16]).unwrap();
        assert!(!near.validate(1e-12).ok);
    }

    #[test]
    fn structural_and_input_errors() {
        assert!(matches!(SkewForm::<f64>::from_matrix(&DMatrix::zeros(3, 3)), Err(Error::Structural(_))));
        assert!(matches!(SkewForm::<f64>::from_upper(3, vec![0.0; 3]), Err(Error::Structural(_))));
        let mut m = j2(1.0);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(SkewForm::from_matrix(&m), Err(Error::Input(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.9, 0.0]);
        assert!(matches!(SkewForm::from_matrix(&asym), Err(Error::Input(_))));
        assert!(SkewForm::<f64>::standard_matrix(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn tiny_asymmetry_is_removed() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -(1.0 + 1e-14), 0.0]);
        let f = SkewForm::from_matrix(&m).unwrap();
        let a = f.matrix();
        assert_eq!((a.clone() + a.transpose()).amax(), 0.0);
    }

    #[test]
    fn normalize_standard_examples() {
        for s in [1.0, 3.0] {
            let nf = SkewForm::from_matrix(&j2(s)).unwrap().normalize().unwrap();
            assert!((nf.alphas[0] - s).abs() < 1e-14);
            assert!((nf.basis.clone() - DMatrix::identity(2, 2)).amax() < 1e-14, "{}", nf.basis);
        }
    }

    #[test]
    fn standard_matrix_examples() {
        let f = SkewForm::standard_matrix(&[1.0]).unwrap();
        assert_eq!(f.matrix(), j2(1.0));
        let f = SkewForm::standard_matrix(&[1.0, 3.0]).unwrap();
        let mut expect = DMatrix::zeros(4, 4);
        expect.view_mut((0, 0), (2, 2)).copy_from(&j2(1.0));
        expect.view_mut((2, 2), (2, 2)).copy_from(&j2(3.0));
        assert_eq!(f.matrix(), expect);
        assert_eq!(SkewForm::standard_matrix(&[2.0, 1.0]).unwrap(), SkewForm::standard_matrix(&[1.0, 2.0]).unwrap());
        let nf = SkewForm::standard_matrix(&[2.0, 1.0, 5.0]).unwrap().normalize().unwrap();
        for (a, b) in nf.alphas.iter().zip([1.0, 2.0, 5.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        // Basis is the identity up to a rotation inside each 2-plane.
        for j in 0..3 {
            let block = nf.basis.view((2 * j, 2 * j), (2, 2)).into_owned();
            assert!((block.transpose() * &block - DMatrix::identity(2, 2)).amax() < 1e-12);
        }
    }

    #[test]
    fn rotated_round_trip_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random_rotation(4, &mut rng);
        let a = r.transpose() * SkewForm::standard_matrix(&[1.0, 2.0]).unwrap().matrix() * &r;
        let f = SkewForm::from_matrix(&a).unwrap();
        let nf = f.normalize().unwrap();
        assert!((nf.alphas[0] - 1.0).abs() < 1e-12 && (nf.alphas[1] - 2.0).abs() < 1e-12);
        assert!(block_residual(&f.matrix(), &nf.basis, &nf.alphas) <= 1e-10);
    }

    #[test]
    fn normalize_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_rotation(6, &mut rng);
        let a = r.transpose() * SkewForm::standard_matrix(&[0.5, 1.5, 4.0]).unwrap().matrix() * &r;
        let f = SkewForm::from_matrix(&a).unwrap();
        assert_eq!(f.normalize().unwrap(), f.normalize().unwrap());
    }

    #[test]
    fn repeated_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r = random_rotation(8, &mut rng);
        let a = r.transpose() * SkewForm::standard_matrix(&[2.0, 2.0, 2.0, 0.5]).unwrap().matrix() * &r;
        let f = SkewForm::from_matrix(&a).unwrap();
        let nf = f.normalize().unwrap();
        assert!(nf.residual <= 1e-10, "{}", nf.residual);
        assert!((nf.alphas[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symplectic_basis_examples() {
        let b = SkewForm::from_matrix(&j2(1.0)).unwrap().symplectic_basis().unwrap();
        assert!((b[0].clone() - DVector::from_vec(vec![1.0, 0.0])).amax() < 1e-14);
        assert!((b[1].clone() - DVector::from_vec(vec![0.0, 1.0])).amax() < 1e-14);
        let f = SkewForm::from_matrix(&j2(4.0)).unwrap();
        let b = f.symplectic_basis().unwrap();
        assert!((b[0].clone() - DVector::from_vec(vec![0.5, 0.0])).amax() < 1e-14);
        assert!((b[1].clone() - DVector::from_vec(vec![0.0, 0.5])).amax() < 1e-14);
        assert!((f.eval(&b[0], &b[1]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symplectic_basis_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let a = &m - m.transpose();
        let f = SkewForm::from_matrix(&a).unwrap();
        let b = f.symplectic_basis().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let pq = f.eval(&b[2 * i], &b[2 * j + 1]);
                assert!((pq - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
                assert!(f.eval(&b[2 * i], &b[2 * j]).abs() < 1e-10);
                assert!(f.eval(&b[2 * i + 1], &b[2 * j + 1]).abs() < 1e-10);
            }
            let (np, nq): (f64, f64) = (b[2 * i].norm(), b[2 * i + 1].norm());
            assert!((np - nq).abs() < 1e-10);
        }
    }

    /// Spectrum of `A` by the real Schur route, independent of the Hermitian solver.
    #[test]
    fn eigen_pairing_matches_schur_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for dim in [2usize, 4, 6, 8, 10] {
            let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
            let a = &m - m.transpose();
            let nf = SkewForm::from_matrix(&a).unwrap().normalize().unwrap();
            let mut spec: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
            spec.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
            let mut expect: Vec<f64> = nf.alphas.iter().flat_map(|&x| [x, -x]).collect();
            expect.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for ((re, im), e) in spec.iter().zip(&expect) {
                assert!(re.abs() < 1e-10 && (im - e).abs() < 1e-10, "dim {dim}: {re}+{im}i vs {e}");
            }
        }
    }

    #[test]
    fn generic_over_f32() {
        let f = SkewForm::<f32>::standard_matrix(&[3.0, 1.0]).unwrap();
        let nf = f.normalize().unwrap();
        assert!((nf.alphas[0] - 1.0).abs() < 1e-5 && (nf.alphas[1] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn json_round_trip() {
        let f = SkewForm::standard_matrix(&[1.0, 2.0]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"dim":4,"upper":[1.0,0.0,0.0,0.0,0.0,2.0]}"#);
        assert_eq!(serde_json::from_str::<SkewForm<f64>>(&s).unwrap(), f);
        assert!(serde_json::from_str::<SkewForm<f64>>(r#"{"dim":3,"upper":[1,2,3]}"#).is_err());
    }
}
