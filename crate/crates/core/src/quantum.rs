//! Finite-dimensional Hilbert spaces on cuts.
//!
//! Every cut carries the same configuration space: `N` distinguishable
//! particles, each on one of `L` sites with a `d`-dimensional internal (spin)
//! degree of freedom. Basis vectors are ordered lexicographically in
//! `(slot 0, slot 1, ...)`, each slot itself ordered by `(site, spin)`:
//!
//! ```text
//! index = sum_i (site_i * d + spin_i) * (L d)^(N - 1 - i)
//! ```
//!
//! Position-diagonal operators (projectors and multiplication operators) are
//! kept as real diagonals where possible and expanded to dense matrices only
//! at API boundaries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lattice::Cut;

pub type C64 = Complex64;
pub type Operator = DMatrix<C64>;
pub type StateVec = DVector<C64>;

/// Shape of the configuration space: sites, particles, internal dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpaceShape {
    pub sites: usize,
    pub particles: usize,
    pub spin_dim: usize,
}

impl SpaceShape {
    pub fn new(sites: usize, particles: usize, spin_dim: usize) -> Result<Self> {
        if sites == 0 || particles == 0 || spin_dim == 0 {
            return Err(crate::error::invalid(
                "space",
                "sites, particles and spin_dim must be positive",
            ));
        }
        Ok(SpaceShape {
            sites,
            particles,
            spin_dim,
        })
    }

    /// Dimension of one particle's factor, `L d`.
    pub fn slot_dim(&self) -> usize {
        self.sites * self.spin_dim
    }

    pub fn dim(&self) -> usize {
        self.slot_dim().pow(self.particles as u32)
    }

    pub fn stride(&self, slot: usize) -> usize {
        self.slot_dim().pow((self.particles - 1 - slot) as u32)
    }

    /// Local `(site * d + spin)` value of `slot` in basis vector `index`.
    pub fn local(&self, index: usize, slot: usize) -> usize {
        (index / self.stride(slot)) % self.slot_dim()
    }

    pub fn site(&self, index: usize, slot: usize) -> usize {
        self.local(index, slot) / self.spin_dim
    }

    /// The one-particle shape with the same sites and spin.
    pub fn single(&self) -> SpaceShape {
        SpaceShape {
            particles: 1,
            ..*self
        }
    }
}

/// The Hilbert space attached to a cut. All cuts share the same basis; the
/// cut records which surface the vectors refer to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutSpace {
    pub cut: Cut,
    pub shape: SpaceShape,
}

impl CutSpace {
    pub fn new(cut: Cut, shape: SpaceShape) -> Result<Self> {
        if cut.sites() != shape.sites {
            return Err(Error::SiteCount {
                expected: shape.sites,
                got: cut.sites(),
            });
        }
        Ok(CutSpace { cut, shape })
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }
}

/// Diagonal of the multiplication operator by `f(site)` in `slot`.
pub fn slot_diagonal(shape: SpaceShape, slot: usize, f: impl Fn(usize) -> f64) -> DVector<f64> {
    let per_site: Vec<f64> = (0..shape.sites).map(f).collect();
    DVector::from_fn(shape.dim(), |idx, _| per_site[shape.site(idx, slot)])
}

pub fn diagonal_operator(diag: &DVector<f64>) -> Operator {
    Operator::from_diagonal(&diag.map(|v| C64::new(v, 0.0)))
}

/// Multiplication by the site function `f` (given per site) in `slot`.
pub fn mult_operator(shape: SpaceShape, slot: usize, f: &[f64]) -> Result<Operator> {
    if f.len() != shape.sites {
        return Err(Error::Dimension {
            expected: shape.sites,
            got: f.len(),
        });
    }
    Ok(diagonal_operator(&slot_diagonal(shape, slot, |x| f[x])))
}

/// Orthogonal projector onto "particle `slot` sits in `sites`".
pub fn position_projector(shape: SpaceShape, slot: usize, sites: &[usize]) -> Operator {
    let mut mask = vec![false; shape.sites];
    for &x in sites {
        mask[x] = true;
    }
    diagonal_operator(&slot_diagonal(shape, slot, |x| {
        f64::from(u8::from(mask[x]))
    }))
}

/// `diag * op` without forming the diagonal matrix.
pub fn scale_rows(diag: &DVector<f64>, op: &Operator) -> Operator {
    let mut out = op.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        row *= C64::new(diag[r], 0.0);
    }
    out
}

/// Largest singular value.
pub fn operator_norm(op: &Operator) -> f64 {
    if op.is_empty() {
        return 0.0;
    }
    op.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn distance(a: &Operator, b: &Operator) -> f64 {
    operator_norm(&(a - b))
}

fn hermitian_deviation(op: &Operator) -> f64 {
    (op - op.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Applies the real function `f` to the spectrum of a Hermitian operator.
///
/// Eigenvalues in `[-1e-8, 0)` are treated as zero; anything more negative is
/// rejected, since every operator passed here is a sum of `L^dagger L` terms.
pub fn hermitian_function(op: &Operator, f: impl Fn(f64) -> f64) -> Result<Operator> {
    let scale = op.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let dev = hermitian_deviation(op);
    if dev > 1e-10 * scale {
        return Err(Error::NotHermitian(dev));
    }
    let herm = (op + op.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    if let Some(&min) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v < -1e-8 * scale.max(1.0))
    {
        return Err(Error::NegativeEigenvalue(min));
    }
    let mapped = eig.eigenvalues.map(|v| C64::new(f(v.max(0.0)), 0.0));
    let q = &eig.eigenvectors;
    Ok(q * Operator::from_diagonal(&mapped) * q.adjoint())
}

/// The positive semidefinite square root.
pub fn hermitian_sqrt(op: &Operator) -> Result<Operator> {
    hermitian_function(op, f64::sqrt)
}

/// Moore-Penrose inverse of the square root, cutting the spectrum at `cutoff`.
pub fn hermitian_pinv_sqrt(op: &Operator, cutoff: f64) -> Result<Operator> {
    hermitian_function(op, |v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 })
}

/// `a^dagger a`, computed with real matrix products.
pub fn gram(a: &Operator) -> Operator {
    let re = a.map(|z| z.re);
    let im = a.map(|z| z.im);
    let (ret, imt) = (re.transpose(), im.transpose());
    let real = &ret * &re + &imt * &im;
    let imag = &ret * &im - &imt * &re;
    Operator::from_fn(a.ncols(), a.ncols(), |r, c| {
        C64::new(real[(r, c)], imag[(r, c)])
    })
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

pub fn expectation(op: &Operator, psi: &StateVec) -> C64 {
    psi.dotc(&(op * psi))
}

pub fn normalized(psi: StateVec) -> StateVec {
    let n = psi.norm();
    psi / C64::new(n, 0.0)
}

/// Haar-like random unit vector (Gaussian components, normalized).
pub fn random_state(dim: usize, rng: &mut impl Rng) -> StateVec {
    normalized(StateVec::from_fn(dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }))
}

/// Product of one-particle states, slot 0 outermost.
pub fn product_state(factors: &[StateVec]) -> StateVec {
    let mut out = StateVec::from_element(1, C64::new(1.0, 0.0));
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape() -> SpaceShape {
        SpaceShape::new(4, 2, 2).unwrap()
    }

    fn close(a: &Operator, b: &Operator, tol: f64) -> bool {
        distance(a, b) < tol
    }

    #[test]
    fn basis_layout() {
        let s = shape();
        assert_eq!(s.dim(), 64);
        // slot 0 at site 2 spin 1, slot 1 at site 0 spin 1
        let idx = (2 * 2 + 1) * 8 + 1;
        assert_eq!(s.site(idx, 0), 2);
        assert_eq!(s.site(idx, 1), 0);
    }

    #[test]
    fn projector_extremes() {
        let s = shape();
        let all = position_projector(s, 1, &[0, 1, 2, 3]);
        assert!(close(&all, &Operator::identity(64, 64), 1e-15));
        let none = position_projector(s, 1, &[]);
        assert_eq!(operator_norm(&none), 0.0);
    }

    #[test]
    fn projector_additivity() {
        let s = shape();
        let a = position_projector(s, 0, &[0, 2]);
        let b = position_projector(s, 0, &[1]);
        let ab = position_projector(s, 0, &[0, 1, 2]);
        assert_eq!(operator_norm(&(&a * &b)), 0.0);
        assert!(close(&(&a + &b), &ab, 1e-15));
        assert!(close(&(&a * &a), &a, 1e-12));
        assert!(close(&a.adjoint(), &a, 1e-12));
    }

    #[test]
    fn multiplication_operators() {
        let s = shape();
        let one = mult_operator(s, 0, &[1.0; 4]).unwrap();
        assert!(close(&one, &Operator::identity(64, 64), 1e-15));
        let ind = mult_operator(s, 1, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(close(&ind, &position_projector(s, 1, &[1, 2]), 1e-15));
        let f = [0.3, -1.2, 2.0, 0.5];
        let g = [1.5, 0.25, -0.75, 4.0];
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a * b).collect();
        let pf = mult_operator(s, 0, &f).unwrap();
        let pg = mult_operator(s, 0, &g).unwrap();
        assert!(close(
            &(&pf * &pg),
            &mult_operator(s, 0, &fg).unwrap(),
            1e-14
        ));
        let qg = mult_operator(s, 1, &g).unwrap();
        assert!(close(&(&pf * &qg), &(&qg * &pf), 1e-15));
    }

    #[test]
    fn sqrt_of_diagonal() {
        let op = Operator::from_diagonal(&DVector::from_vec(vec![
            C64::new(4.0, 0.0),
            C64::new(9.0, 0.0),
        ]));
        let r = hermitian_sqrt(&op).unwrap();
        assert!((r[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((r[(1, 1)].re - 3.0).abs() < 1e-12);
        let id = Operator::identity(5, 5);
        assert!(close(&hermitian_sqrt(&id).unwrap(), &id, 1e-12));
    }

    #[test]
    fn sqrt_of_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Operator::from_fn(12, 12, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let a = b.adjoint() * &b;
        let r = hermitian_sqrt(&a).unwrap();
        assert!(close(&(&r * &r), &a, 1e-8));
    }

    #[test]
    fn gram_matches_adjoint_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Operator::from_fn(7, 5, |_, _| C64::new(rng.random(), rng.random()));
        assert!(close(&gram(&a), &(a.adjoint() * &a), 1e-12));
    }

    #[test]
    fn sqrt_rejects_negative_spectrum() {
        let op = Operator::from_diagonal(&DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(-0.5, 0.0),
        ]));
        assert!(matches!(
            hermitian_sqrt(&op),
            Err(Error::NegativeEigenvalue(_))
        ));
    }
}
