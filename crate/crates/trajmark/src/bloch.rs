//! SU(n) basis construction and density-matrix <-> Bloch-vector conversion.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! - basis normalization `Tr(s_i s_j) = 2 delta_ij`, so for n = 2 the basis is
//!   exactly the Pauli matrices in (x, y, z) order;
//! - Bloch coordinates `x_i = (n/2) Tr(rho s_i)`, inverse
//!   `rho = (1/n)(I + sum_i x_i s_i)`;
//! - purity `Tr rho^2 = 1/n + (2/n^2) |x|^2`;
//! - the *excited* qubit state `|1>` is basis index 0, so it maps to
//!   Bloch z = +1 and the mean excitation is `(z + 1)/2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Real Bloch coordinate vector of length n^2 - 1 (or a plain phase-space
/// point for classical data).
pub type BlochVector = DVector<f64>;

const HERM_TOL: f64 = 1e-12;

/// Ordered set of n^2 - 1 traceless Hermitian matrices with
/// `Tr(s_i s_j) = 2 delta_ij`.
#[derive(Debug, Clone)]
pub struct SuBasis {
    pub n: usize,
    pub elements: Vec<CMatrix>,
}

impl SuBasis {
    /// Generalized Gell-Mann construction: symmetric pairs, antisymmetric
    /// pairs, then diagonal matrices, each family rescaled to the
    /// normalization above. For n = 2 this yields Pauli x, y, z in order.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!(
                "SU(n) basis requires n >= 2, got {n}"
            )));
        }
        let zero = || CMatrix::zeros(n, n);
        let mut elements = Vec::with_capacity(n * n - 1);
        // Symmetric: E_jk + E_kj
        for j in 0..n {
            for k in (j + 1)..n {
                let mut m = zero();
                m[(j, k)] = Complex64::new(1.0, 0.0);
                m[(k, j)] = Complex64::new(1.0, 0.0);
                elements.push(m);
            }
        }
        // Antisymmetric: -i (E_jk - E_kj)
        for j in 0..n {
            for k in (j + 1)..n {
                let mut m = zero();
                m[(j, k)] = Complex64::new(0.0, -1.0);
                m[(k, j)] = Complex64::new(0.0, 1.0);
                elements.push(m);
            }
        }
        // Diagonal: sqrt(2/(l(l+1))) (sum_{m<l} E_mm - l E_ll)
        for l in 1..n {
            let mut m = zero();
            let scale = (2.0 / (l as f64 * (l as f64 + 1.0))).sqrt();
            for mm in 0..l {
                m[(mm, mm)] = Complex64::new(scale, 0.0);
            }
            m[(l, l)] = Complex64::new(-scale * l as f64, 0.0);
            elements.push(m);
        }
        Ok(SuBasis { n, elements })
    }

    /// Number of basis elements, n^2 - 1.
    pub fn dim(&self) -> usize {
        self.n * self.n - 1
    }
}

/// n x n complex matrix constrained to be Hermitian with unit trace.
/// Positivity is *not* enforced: unphysical flows are analyzed on purpose.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub n: usize,
    pub entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dev = herm_deviation(&entries);
        if dev > HERM_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = trace(&entries);
        if (tr.re - 1.0).abs() > HERM_TOL || tr.im.abs() > HERM_TOL {
            return Err(Error::InvalidInput(format!(
                "density matrix trace {} != 1",
                tr
            )));
        }
        Ok(DensityMatrix { n, entries })
    }

    /// Maximally mixed state I/n.
    pub fn maximally_mixed(n: usize) -> Self {
        let entries = CMatrix::identity(n, n) * Complex64::new(1.0 / n as f64, 0.0);
        DensityMatrix { n, entries }
    }

    /// Pure state |k><k| in the computational basis.
    pub fn basis_state(n: usize, k: usize) -> Self {
        let mut entries = CMatrix::zeros(n, n);
        entries[(k, k)] = Complex64::new(1.0, 0.0);
        DensityMatrix { n, entries }
    }
}

pub(crate) fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub(crate) fn herm_deviation(m: &CMatrix) -> f64 {
    let mut dev = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > dev {
                dev = d;
            }
        }
    }
    dev
}

/// `x_i = (n/2) Tr(rho s_i)`.
pub fn to_bloch(rho: &DensityMatrix, basis: &SuBasis) -> Result<BlochVector> {
    if rho.n != basis.n {
        return Err(Error::DimensionMismatch(format!(
            "state dim {} vs basis dim {}",
            rho.n, basis.n
        )));
    }
    Ok(traceless_coords(&rho.entries, basis))
}

/// Coordinates of an arbitrary matrix in the basis, `(n/2) Tr(m s_i)`.
/// Used both for states and for (traceless) generator outputs.
pub(crate) fn traceless_coords(m: &CMatrix, basis: &SuBasis) -> BlochVector {
    let n = basis.n as f64;
    BlochVector::from_iterator(
        basis.dim(),
        basis
            .elements
            .iter()
            .map(|s| 0.5 * n * trace(&(m * s)).re),
    )
}

/// `rho = (1/n)(I + sum_i x_i s_i)`.
pub fn from_bloch(x: &BlochVector, basis: &SuBasis) -> Result<DensityMatrix> {
    if x.len() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "bloch dim {} vs basis dim {}",
            x.len(),
            basis.dim()
        )));
    }
    let n = basis.n;
    let mut m = CMatrix::identity(n, n);
    for (xi, s) in x.iter().zip(basis.elements.iter()) {
        m += s * Complex64::new(*xi, 0.0);
    }
    m *= Complex64::new(1.0 / n as f64, 0.0);
    Ok(DensityMatrix { n, entries: m })
}

/// Half the sum of singular values of `rho1 - rho2`.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.n != rho2.n {
        return Err(Error::DimensionMismatch(format!(
            "trace_distance: {} vs {}",
            rho1.n, rho2.n
        )));
    }
    let diff = &rho1.entries - &rho2.entries;
    let sv = diff.singular_values();
    Ok(0.5 * sv.iter().sum::<f64>())
}

/// `Tr rho^2` from Bloch coordinates: `1/n + (2/n^2) |x|^2`.
pub fn purity(x: &BlochVector, n: usize) -> f64 {
    let nf = n as f64;
    1.0 / nf + 2.0 / (nf * nf) * x.norm_squared()
}

/// Minimum eigenvalue with a -1e-10 tolerance on the boolean. Diagnostic
/// only; never blocks downstream analysis.
pub fn positivity_check(rho: &DensityMatrix) -> (bool, f64) {
    let eig = rho.entries.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (min >= -1e-10, min)
}

/// Which factor of a bipartite system to keep in [`partial_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// Standard partial trace over one factor of an `nA x nB` composite.
pub fn partial_trace(
    rho_ab: &DensityMatrix,
    dims: (usize, usize),
    keep: Subsystem,
) -> Result<DensityMatrix> {
    let (na, nb) = dims;
    if na * nb != rho_ab.n {
        return Err(Error::DimensionMismatch(format!(
            "partial_trace: {}x{} != {}",
            na, nb, rho_ab.n
        )));
    }
    let m = &rho_ab.entries;
    let out = match keep {
        Subsystem::A => {
            let mut r = CMatrix::zeros(na, na);
            for i in 0..na {
                for j in 0..na {
                    for k in 0..nb {
                        r[(i, j)] += m[(i * nb + k, j * nb + k)];
                    }
                }
            }
            r
        }
        Subsystem::B => {
            let mut r = CMatrix::zeros(nb, nb);
            for i in 0..nb {
                for j in 0..nb {
                    for k in 0..na {
                        r[(i, j)] += m[(k * nb + i, k * nb + j)];
                    }
                }
            }
            r
        }
    };
    let n = out.nrows();
    Ok(DensityMatrix { n, entries: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_density(n: usize, rng: &mut impl Rng) -> DensityMatrix {
        // G G^dagger / Tr, Ginibre-style
        let g = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let tr = trace(&m);
        DensityMatrix {
            n,
            entries: m / tr,
        }
    }

    #[test]
    fn pauli_matrices_at_n2() {
        let b = SuBasis::new(2).unwrap();
        assert_eq!(b.elements.len(), 3);
        let sx = &b.elements[0];
        let sy = &b.elements[1];
        let sz = &b.elements[2];
        assert_eq!(sx[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(sy[(0, 1)], Complex64::new(0.0, -1.0));
        assert_eq!(sz[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(sz[(1, 1)], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn rejects_n_below_2() {
        assert!(SuBasis::new(1).is_err());
    }

    #[test]
    fn gram_matrix_is_twice_identity() {
        for n in [2usize, 3, 4] {
            let b = SuBasis::new(n).unwrap();
            assert_eq!(b.elements.len(), n * n - 1);
            for (i, si) in b.elements.iter().enumerate() {
                assert!(trace(si).norm() < 1e-12, "element {i} not traceless");
                assert!(herm_deviation(si) < 1e-12, "element {i} not Hermitian");
                for (j, sj) in b.elements.iter().enumerate() {
                    let g = trace(&(si * sj)).re;
                    let expect = if i == j { 2.0 } else { 0.0 };
                    assert_abs_diff_eq!(g, expect, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn maximally_mixed_maps_to_origin() {
        let b = SuBasis::new(2).unwrap();
        let x = to_bloch(&DensityMatrix::maximally_mixed(2), &b).unwrap();
        assert!(x.norm() < 1e-14);
    }

    #[test]
    fn excited_state_maps_to_plus_z() {
        // |1> is basis index 0 by convention, so Fig.-2-style mean
        // excitation (z+1)/2 starts at 1 for rho(0) = |1><1|.
        let b = SuBasis::new(2).unwrap();
        let x = to_bloch(&DensityMatrix::basis_state(2, 0), &b).unwrap();
        assert_abs_diff_eq!(x[2], 1.0, epsilon = 1e-14);
        assert!(x[0].abs() < 1e-14 && x[1].abs() < 1e-14);
    }

    #[test]
    fn equator_state_is_rank_one_projector() {
        let b = SuBasis::new(2).unwrap();
        let x = BlochVector::from_vec(vec![1.0, 0.0, 0.0]);
        let rho = from_bloch(&x, &b).unwrap();
        let sq = &rho.entries * &rho.entries;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!((sq[(i, j)] - rho.entries[(i, j)]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [2usize, 3, 4] {
            let b = SuBasis::new(n).unwrap();
            for _ in 0..50 {
                let rho = random_density(n, &mut rng);
                let x = to_bloch(&rho, &b).unwrap();
                let back = from_bloch(&x, &b).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        assert!((back.entries[(i, j)] - rho.entries[(i, j)]).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn purity_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [2usize, 3, 4] {
            let b = SuBasis::new(n).unwrap();
            for _ in 0..300 {
                let rho = random_density(n, &mut rng);
                let x = to_bloch(&rho, &b).unwrap();
                let direct = trace(&(&rho.entries * &rho.entries)).re;
                assert_abs_diff_eq!(purity(&x, n), direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn trace_distance_orthogonal_pure_states() {
        let b = SuBasis::new(2).unwrap();
        let _ = b;
        let r0 = DensityMatrix::basis_state(2, 0);
        let r1 = DensityMatrix::basis_state(2, 1);
        assert_abs_diff_eq!(trace_distance(&r0, &r1).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_distance(&r0, &r0).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn trace_distance_qubit_bloch_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = SuBasis::new(2).unwrap();
        for _ in 0..50 {
            let x1 = BlochVector::from_fn(3, |_, _| rng.gen::<f64>() - 0.5);
            let x2 = BlochVector::from_fn(3, |_, _| rng.gen::<f64>() - 0.5);
            let r1 = from_bloch(&x1, &b).unwrap();
            let r2 = from_bloch(&x2, &b).unwrap();
            let d = trace_distance(&r1, &r2).unwrap();
            assert_abs_diff_eq!(d, 0.5 * (&x1 - &x2).norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn trace_distance_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2usize, 3] {
            for _ in 0..100 {
                let a = random_density(n, &mut rng);
                let b2 = random_density(n, &mut rng);
                let c = random_density(n, &mut rng);
                let dab = trace_distance(&a, &b2).unwrap();
                let dbc = trace_distance(&b2, &c).unwrap();
                let dac = trace_distance(&a, &c).unwrap();
                assert!(dac <= dab + dbc + 1e-10);
            }
        }
    }

    #[test]
    fn positivity_diagnostics() {
        let (ok, min) = positivity_check(&DensityMatrix::maximally_mixed(2));
        assert!(ok);
        assert_abs_diff_eq!(min, 0.5, epsilon = 1e-12);

        // |x| = 2 is outside the Bloch ball: eigenvalues (1 +- 2)/2.
        let b = SuBasis::new(2).unwrap();
        let rho = from_bloch(&BlochVector::from_vec(vec![2.0, 0.0, 0.0]), &b).unwrap();
        let (ok, min) = positivity_check(&rho);
        assert!(!ok);
        assert_abs_diff_eq!(min, -0.5, epsilon = 1e-12);

        let (ok, min) = positivity_check(&DensityMatrix::basis_state(2, 0));
        assert!(ok);
        assert_abs_diff_eq!(min, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_product_and_bell() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ra = random_density(2, &mut rng);
        let rb = random_density(2, &mut rng);
        let composite = ra.entries.kronecker(&rb.entries);
        let got = partial_trace(
            &DensityMatrix { n: 4, entries: composite },
            (2, 2),
            Subsystem::A,
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((got.entries[(i, j)] - ra.entries[(i, j)]).norm() < 1e-12);
            }
        }

        // Bell state reduces to I/2.
        let mut bell = CMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            bell[(i, j)] = Complex64::new(0.5, 0.0);
        }
        let red = partial_trace(&DensityMatrix { n: 4, entries: bell }, (2, 2), Subsystem::A).unwrap();
        assert!((red.entries[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((red.entries[(1, 1)].re - 0.5).abs() < 1e-12);
        assert!(red.entries[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn partial_trace_matches_index_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_density(4, &mut rng);
        let got = partial_trace(&rho, (2, 2), Subsystem::B).unwrap();
        // explicit double-loop oracle
        let mut oracle = CMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    oracle[(i, j)] += rho.entries[(k * 2 + i, k * 2 + j)];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((got.entries[(i, j)] - oracle[(i, j)]).norm() < 1e-12);
            }
        }
        // trace and Hermiticity preserved, positivity within tolerance
        assert!((trace(&got.entries).re - 1.0).abs() < 1e-12);
        assert!(herm_deviation(&got.entries) < 1e-12);
        let (ok, _) = positivity_check(&got);
        assert!(ok);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let b2 = SuBasis::new(2).unwrap();
        let r3 = DensityMatrix::maximally_mixed(3);
        assert!(to_bloch(&r3, &b2).is_err());
        assert!(from_bloch(&BlochVector::from_vec(vec![0.0; 8]), &b2).is_err());
        assert!(trace_distance(&r3, &DensityMatrix::maximally_mixed(2)).is_err());
        assert!(partial_trace(&r3, (2, 2), Subsystem::A).is_err());
    }
}
