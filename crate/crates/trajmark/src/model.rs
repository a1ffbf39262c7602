//! Time-dependent master-equation models and their reduction to an affine
//! vector field on Bloch coordinates.
//!
//! A [`GeneratorModel`] is a Hamiltonian plus dissipation channels with scalar
//! rate schedules,
//! `rho' = -i[H(t), rho] + sum_k g_k(t) (L_k rho L_k^+ - 1/2 {L_k^+ L_k, rho})`.
//! Its action is exactly linear-affine on Bloch coordinates, `x' = A(t) x + b(t)`;
//! [`GeneratorModel::compile`] precomputes the per-term constant matrices so
//! the integrator only has to evaluate scalar schedules at run time.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{self, BlochVector, CMatrix, DensityMatrix, SuBasis};
use crate::error::{Error, Result};

/// Scalar coefficient or decay rate as a function of time.
///
/// All kinds are defined for every `t >= 0`; piecewise kinds are
/// right-continuous at their breakpoints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateSchedule {
    Constant {
        value: f64,
    },
    /// `values[i]` held for `durations[i]`; the sequence repeats when
    /// `repeat` is set, otherwise the last value holds forever.
    PiecewiseConstant {
        durations: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        repeat: bool,
    },
    /// `scale * tanh(rate * t)`.
    TanhScaled {
        scale: f64,
        rate: f64,
    },
    /// `start + slope * t`.
    LinearRamp {
        start: f64,
        slope: f64,
    },
    /// `start * exp(rate * t)`, capped at `cap`.
    ExponentialRamp {
        start: f64,
        rate: f64,
        cap: f64,
    },
    /// `hold` for `t <= t_eq`, then `hold * exp(rate * (t - t_eq))` capped
    /// at `cap`.
    HoldThenRamp {
        hold: f64,
        t_eq: f64,
        rate: f64,
        cap: f64,
    },
    /// `offset + amplitude * sin(omega * t + phase)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-linear interpolation through `(t, value)` knots, clamped
    /// outside the knot range.
    CustomTable {
        knots: Vec<(f64, f64)>,
    },
}

impl RateSchedule {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            RateSchedule::Constant { value } => *value,
            RateSchedule::PiecewiseConstant {
                durations,
                values,
                repeat,
            } => {
                let total: f64 = durations.iter().sum();
                let mut tau = t;
                if *repeat && total > 0.0 {
                    tau = t.rem_euclid(total);
                } else if tau >= total {
                    return *values.last().unwrap_or(&0.0);
                }
                let mut acc = 0.0;
                for (d, v) in durations.iter().zip(values.iter()) {
                    acc += d;
                    if tau < acc {
                        return *v;
                    }
                }
                *values.last().unwrap_or(&0.0)
            }
            RateSchedule::TanhScaled { scale, rate } => scale * (rate * t).tanh(),
            RateSchedule::LinearRamp { start, slope } => start + slope * t,
            RateSchedule::ExponentialRamp { start, rate, cap } => {
                let v = start * (rate * t).exp();
                if *rate > 0.0 {
                    v.min(*cap)
                } else {
                    v.max(*cap)
                }
            }
            RateSchedule::HoldThenRamp {
                hold,
                t_eq,
                rate,
                cap,
            } => {
                if t <= *t_eq {
                    *hold
                } else {
                    (hold * (rate * (t - t_eq)).exp()).min(*cap)
                }
            }
            RateSchedule::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => offset + amplitude * (omega * t + phase).sin(),
            RateSchedule::CustomTable { knots } => {
                if knots.is_empty() {
                    return 0.0;
                }
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                for w in knots.windows(2) {
                    let (t0, v0) = w[0];
                    let (t1, v1) = w[1];
                    if t <= t1 {
                        let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                        return v0 + f * (v1 - v0);
                    }
                }
                knots.last().unwrap().1
            }
        }
    }

    /// Times in `(t0, t1)` where the schedule is non-smooth. The integrator
    /// treats these as mandatory mesh points.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            RateSchedule::Constant { .. }
            | RateSchedule::TanhScaled { .. }
            | RateSchedule::LinearRamp { .. }
            | RateSchedule::Sinusoid { .. } => {}
            RateSchedule::PiecewiseConstant {
                durations, repeat, ..
            } => {
                let total: f64 = durations.iter().sum();
                if total <= 0.0 {
                    return out;
                }
                let mut base = 0.0;
                loop {
                    let mut acc = base;
                    for d in durations {
                        acc += d;
                        if acc >= t1 {
                            return out;
                        }
                        if acc > t0 {
                            out.push(acc);
                        }
                    }
                    if !*repeat {
                        return out;
                    }
                    base += total;
                }
            }
            RateSchedule::ExponentialRamp { start, rate, cap } => {
                if *rate != 0.0 && *start != 0.0 && cap / start > 0.0 {
                    let tc = (cap / start).ln() / rate;
                    if tc > t0 && tc < t1 {
                        out.push(tc);
                    }
                }
            }
            RateSchedule::HoldThenRamp {
                hold,
                t_eq,
                rate,
                cap,
            } => {
                if *t_eq > t0 && *t_eq < t1 {
                    out.push(*t_eq);
                }
                if *rate != 0.0 && *hold > 0.0 && *cap > 0.0 {
                    let tc = t_eq + (cap / hold).ln() / rate;
                    if tc > t0 && tc < t1 {
                        out.push(tc);
                    }
                }
            }
            RateSchedule::CustomTable { knots } => {
                out.extend(knots.iter().map(|k| k.0).filter(|&t| t > t0 && t < t1));
            }
        }
        out
    }
}

/// Hamiltonian terms and dissipation channels with scalar schedules.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    pub n: usize,
    pub hamiltonian: Vec<(CMatrix, RateSchedule)>,
    pub channels: Vec<(CMatrix, RateSchedule)>,
    pub label: String,
}

impl GeneratorModel {
    pub fn new(
        n: usize,
        hamiltonian: Vec<(CMatrix, RateSchedule)>,
        channels: Vec<(CMatrix, RateSchedule)>,
        label: impl Into<String>,
    ) -> Result<Self> {
        for (h, _) in &hamiltonian {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "Hamiltonian term is {}x{}, expected {n}x{n}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            let dev = bloch::herm_deviation(h);
            if dev > 1e-12 {
                return Err(Error::NotHermitian(dev));
            }
        }
        for (l, _) in &channels {
            if l.nrows() != n || l.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "jump operator is {}x{}, expected {n}x{n}",
                    l.nrows(),
                    l.ncols()
                )));
            }
        }
        Ok(GeneratorModel {
            n,
            hamiltonian,
            channels,
            label: label.into(),
        })
    }

    /// Instantaneous action of the generator on an arbitrary matrix.
    pub fn apply(&self, t: f64, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.n, self.n);
        for (h, sched) in &self.hamiltonian {
            let c = sched.value(t);
            if c != 0.0 {
                out += hamiltonian_action(h, rho) * Complex64::new(c, 0.0);
            }
        }
        for (l, sched) in &self.channels {
            let g = sched.value(t);
            if g != 0.0 {
                out += dissipator_action(l, rho) * Complex64::new(g, 0.0);
            }
        }
        out
    }

    /// Exact affine reduction `x' = A(t) x + b(t)` with the time dependence
    /// factored into the scalar schedules.
    pub fn compile(&self) -> Result<AffineGenerator> {
        let basis = SuBasis::new(self.n)?;
        let d = basis.dim();
        let mut terms = Vec::new();
        let mixed = DensityMatrix::maximally_mixed(self.n);
        let mut push_term = |op: &dyn Fn(&CMatrix) -> CMatrix, sched: RateSchedule| {
            let b = bloch::traceless_coords(&op(&mixed.entries), &basis);
            let mut a = DMatrix::<f64>::zeros(d, d);
            for i in 0..d {
                let mut x = BlochVector::zeros(d);
                x[i] = 1.0;
                let rho = bloch::from_bloch(&x, &basis).expect("dims match");
                let col = bloch::traceless_coords(&op(&rho.entries), &basis) - &b;
                a.set_column(i, &col);
            }
            terms.push(AffineTerm {
                a,
                b,
                schedule: sched,
            });
        };
        for (h, sched) in &self.hamiltonian {
            push_term(&|rho| hamiltonian_action(h, rho), sched.clone());
        }
        for (l, sched) in &self.channels {
            push_term(&|rho| dissipator_action(l, rho), sched.clone());
        }
        Ok(AffineGenerator {
            dim: d,
            terms,
            label: self.label.clone(),
        })
    }

    pub fn affine_form(&self, t: f64) -> Result<AffineField> {
        Ok(self.compile()?.field_at(t))
    }

    /// Canonical (Kossakowski) decomposition of the instantaneous generator
    /// in the orthonormal traceless basis `F_i = s_i / sqrt(2)`.
    ///
    /// Returns the effective Hamiltonian, the Kossakowski matrix `a_ij`, and
    /// its eigenvalues (the canonical decay rates) in descending order.
    pub fn kossakowski(&self, t: f64) -> Result<(CMatrix, CMatrix, Vec<f64>)> {
        let n = self.n;
        let basis = SuBasis::new(n)?;
        let d = basis.dim();
        // Choi-like matrix of the generator: C[(i*n+m),(j*n+l)] = L(E_ij)[m,l].
        let mut choi = CMatrix::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                let mut eij = CMatrix::zeros(n, n);
                eij[(i, j)] = Complex64::new(1.0, 0.0);
                let img = self.apply(t, &eij);
                for m in 0..n {
                    for l in 0..n {
                        choi[(i * n + m, j * n + l)] = img[(m, l)];
                    }
                }
            }
        }
        // Orthonormal operator basis: F_0 = I/sqrt(n), F_i = s_i/sqrt(2),
        // vectorized as w[(i*n+m)] = F[m,i].
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut ops: Vec<CMatrix> = Vec::with_capacity(d + 1);
        ops.push(CMatrix::identity(n, n) / Complex64::new((n as f64).sqrt(), 0.0));
        for s in &basis.elements {
            ops.push(s * Complex64::new(inv_sqrt2, 0.0));
        }
        let vecs: Vec<DVector<Complex64>> = ops
            .iter()
            .map(|f| {
                DVector::from_fn(n * n, |idx, _| {
                    let (i, m) = (idx / n, idx % n);
                    f[(m, i)]
                })
            })
            .collect();
        let mut coeff = CMatrix::zeros(d + 1, d + 1);
        for (alpha, wa) in vecs.iter().enumerate() {
            for (beta, wb) in vecs.iter().enumerate() {
                coeff[(alpha, beta)] = (wa.adjoint() * &choi * wb)[(0, 0)];
            }
        }
        // Traceless block is the Kossakowski matrix.
        let mut a = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                a[(i, j)] = coeff[(i + 1, j + 1)];
            }
        }
        // Effective Hamiltonian from the mixed block:
        // H = (i / (2 sqrt(n))) (B - B^+), B = sum_i c_{i0} F_i.
        let mut bmat = CMatrix::zeros(n, n);
        for i in 0..d {
            bmat += &ops[i + 1] * coeff[(i + 1, 0)];
        }
        let h_eff = (&bmat - bmat.adjoint()) * Complex64::new(0.0, 0.5 / (n as f64).sqrt());

        let eig = a.clone().symmetric_eigen();
        let mut rates: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        rates.sort_by(|p, q| q.partial_cmp(p).unwrap());
        Ok((h_eff, a, rates))
    }
}

fn hamiltonian_action(h: &CMatrix, rho: &CMatrix) -> CMatrix {
    (h * rho - rho * h) * Complex64::new(0.0, -1.0)
}

fn dissipator_action(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    let ldl = l.adjoint() * l;
    l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * Complex64::new(0.5, 0.0)
}

/// Instantaneous affine field `x' = A x + b` (units 1/time).
#[derive(Debug, Clone)]
pub struct AffineField {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineField {
    pub fn eval(&self, x: &BlochVector) -> BlochVector {
        &self.a * x + &self.b
    }
}

#[derive(Clone)]
struct AffineTerm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    schedule: RateSchedule,
}

impl std::fmt::Debug for AffineTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineTerm")
            .field("schedule", &self.schedule)
            .finish()
    }
}

/// Precompiled affine vector field `x' = sum_k g_k(t) (A_k x + b_k)`.
///
/// This is the interchange type between models and the integrator/detector;
/// classical demo flows construct it directly without a quantum model.
#[derive(Debug, Clone)]
pub struct AffineGenerator {
    pub dim: usize,
    terms: Vec<AffineTerm>,
    pub label: String,
}

impl AffineGenerator {
    pub fn from_terms(
        dim: usize,
        terms: Vec<(DMatrix<f64>, DVector<f64>, RateSchedule)>,
        label: impl Into<String>,
    ) -> Self {
        AffineGenerator {
            dim,
            terms: terms
                .into_iter()
                .map(|(a, b, schedule)| AffineTerm { a, b, schedule })
                .collect(),
            label: label.into(),
        }
    }

    pub fn field_at(&self, t: f64) -> AffineField {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        let mut b = DVector::zeros(self.dim);
        for term in &self.terms {
            let g = term.schedule.value(t);
            if g != 0.0 {
                a += &term.a * g;
                b += &term.b * g;
            }
        }
        AffineField { a, b }
    }

    pub fn rhs(&self, t: f64, x: &BlochVector) -> BlochVector {
        let mut v = DVector::zeros(self.dim);
        for term in &self.terms {
            let g = term.schedule.value(t);
            if g != 0.0 {
                v += (&term.a * x + &term.b) * g;
            }
        }
        v
    }

    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut bps: Vec<f64> = self
            .terms
            .iter()
            .flat_map(|term| term.schedule.breakpoints(t0, t1))
            .collect();
        bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bps.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        bps
    }

    /// Prop.-1 witness: the field is constant over a 64-point grid to 1e-12.
    pub fn is_time_independent(&self, horizon: f64) -> bool {
        let f0 = self.field_at(0.0);
        for k in 1..64 {
            let t = horizon * k as f64 / 63.0;
            let f = self.field_at(t);
            let da = (&f.a - &f0.a).abs().max();
            let db = (&f.b - &f0.b).abs().max();
            if da > 1e-12 || db > 1e-12 {
                return false;
            }
        }
        true
    }
}

// --- model specification file (JSON) ---

#[derive(Debug, Serialize, Deserialize)]
pub struct TermSpec {
    /// Row-major complex entries as `[re, im]` pairs.
    pub matrix: Vec<[f64; 2]>,
    pub schedule: RateSchedule,
}

/// On-disk model description.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    #[serde(default)]
    pub hamiltonian: Vec<TermSpec>,
    #[serde(default)]
    pub channels: Vec<TermSpec>,
    pub label: String,
}

fn matrix_from_pairs(n: usize, pairs: &[[f64; 2]]) -> Result<CMatrix> {
    if pairs.len() != n * n {
        return Err(Error::InvalidInput(format!(
            "matrix has {} entries, expected {}",
            pairs.len(),
            n * n
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        let p = pairs[i * n + j];
        Complex64::new(p[0], p[1])
    }))
}

fn matrix_to_pairs(m: &CMatrix) -> Vec<[f64; 2]> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

impl GeneratorModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let conv = |terms: &[TermSpec]| -> Result<Vec<(CMatrix, RateSchedule)>> {
            terms
                .iter()
                .map(|t| Ok((matrix_from_pairs(spec.n, &t.matrix)?, t.schedule.clone())))
                .collect()
        };
        GeneratorModel::new(
            spec.n,
            conv(&spec.hamiltonian)?,
            conv(&spec.channels)?,
            spec.label.clone(),
        )
    }

    pub fn to_spec(&self) -> ModelSpec {
        let conv = |terms: &[(CMatrix, RateSchedule)]| {
            terms
                .iter()
                .map(|(m, s)| TermSpec {
                    matrix: matrix_to_pairs(m),
                    schedule: s.clone(),
                })
                .collect()
        };
        ModelSpec {
            n: self.n,
            hamiltonian: conv(&self.hamiltonian),
            channels: conv(&self.channels),
            label: self.label.clone(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(json)?;
        GeneratorModel::from_spec(&spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_spec())?)
    }
}

/// Pauli matrices in the qubit convention used throughout: basis index 0 is
/// the excited state `|1>`, so `|1><1|` sits at Bloch z = +1.
pub mod ops {
    use super::CMatrix;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn sigma_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn sigma_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn sigma_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    /// Lowering operator `|0><1|` (decay from the excited state).
    pub fn sigma_minus() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)])
    }

    /// Raising operator `|1><0|`.
    pub fn sigma_plus() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{from_bloch, to_bloch, SuBasis};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn dephasing(gamma: f64) -> GeneratorModel {
        GeneratorModel::new(
            2,
            vec![],
            vec![(ops::sigma_z(), RateSchedule::Constant { value: gamma })],
            "dephasing",
        )
        .unwrap()
    }

    fn example5(gamma: f64) -> GeneratorModel {
        GeneratorModel::new(
            2,
            vec![(ops::sigma_x(), RateSchedule::Constant { value: 1.0 })],
            vec![(ops::sigma_minus(), RateSchedule::Constant { value: gamma })],
            "ex5",
        )
        .unwrap()
    }

    fn example4() -> GeneratorModel {
        GeneratorModel::new(
            2,
            vec![],
            vec![
                (ops::sigma_x(), RateSchedule::Constant { value: 0.5 }),
                (ops::sigma_y(), RateSchedule::Constant { value: 0.5 }),
                (
                    ops::sigma_z(),
                    RateSchedule::TanhScaled {
                        scale: -0.5,
                        rate: 1.0,
                    },
                ),
            ],
            "ex4",
        )
        .unwrap()
    }

    #[test]
    fn square_wave_is_right_continuous() {
        let s = RateSchedule::PiecewiseConstant {
            durations: vec![10.0, 10.0],
            values: vec![1.0, 0.0],
            repeat: true,
        };
        assert_eq!(s.value(0.0), 1.0);
        assert_eq!(s.value(10.0), 0.0);
        assert_eq!(s.value(19.999), 0.0);
        assert_eq!(s.value(20.0), 1.0);
        assert_eq!(s.breakpoints(0.0, 35.0), vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn hold_then_ramp_caps() {
        let s = RateSchedule::HoldThenRamp {
            hold: 0.35,
            t_eq: 40.0,
            rate: 0.05,
            cap: 300.0,
        };
        assert_eq!(s.value(10.0), 0.35);
        assert_abs_diff_eq!(s.value(41.0), 0.35 * (0.05f64).exp(), epsilon = 1e-12);
        assert_eq!(s.value(1e4), 300.0);
    }

    #[test]
    fn dephasing_affine_form() {
        let f = dephasing(1.0).affine_form(0.0).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -2.0, 0.0]));
        assert!((&f.a - expect).abs().max() < 1e-12);
        assert!(f.b.norm() < 1e-12);

        // Example 1: sign-flipped dephasing.
        let f = dephasing(-1.0).affine_form(0.0).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 0.0]));
        assert!((&f.a - expect).abs().max() < 1e-12);
    }

    #[test]
    fn example5_affine_form_and_fixed_point() {
        let g = 1.0;
        let f = example5(g).affine_form(0.0).unwrap();
        let expect = DMatrix::from_row_slice(
            3,
            3,
            &[-g / 2.0, 0.0, 0.0, 0.0, -g / 2.0, -2.0, 0.0, 2.0, -g],
        );
        assert!((&f.a - expect).abs().max() < 1e-10);
        assert!((&f.b - DVector::from_vec(vec![0.0, 0.0, -g])).norm() < 1e-12);

        let fp = -f.a.clone().lu().solve(&f.b).unwrap();
        let expect_fp = DVector::from_vec(vec![0.0, 4.0 * g / (g * g + 8.0), -g * g / (g * g + 8.0)]);
        assert!((fp - expect_fp).norm() < 1e-10);
    }

    #[test]
    fn affine_form_is_exact_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = SuBasis::new(2).unwrap();
        for model in [dephasing(0.7), example4(), example5(2.0)] {
            let gen = model.compile().unwrap();
            for _ in 0..30 {
                let t = rng.gen::<f64>() * 5.0;
                let x = BlochVector::from_fn(3, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
                let rho = from_bloch(&x, &basis).unwrap();
                let drho = model.apply(t, &rho.entries);
                let oracle = crate::bloch::traceless_coords(&drho, &basis);
                let got = gen.rhs(t, &x);
                assert!((got - oracle).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn generator_preserves_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let basis = SuBasis::new(2).unwrap();
        for model in [example4(), example5(1.3)] {
            for _ in 0..20 {
                let x = BlochVector::from_fn(3, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
                let rho = from_bloch(&x, &basis).unwrap();
                let drho = model.apply(rng.gen::<f64>(), &rho.entries);
                assert!(crate::bloch::trace(&drho).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn time_independence_witness() {
        assert!(dephasing(1.0).compile().unwrap().is_time_independent(10.0));
        assert!(!example4().compile().unwrap().is_time_independent(10.0));
    }

    #[test]
    fn kossakowski_example4_rates() {
        let (_, _, rates) = example4().kossakowski(1.0).unwrap();
        let tanh1 = 1.0f64.tanh();
        assert_abs_diff_eq!(rates[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rates[1], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rates[2], -tanh1, epsilon = 1e-10);
    }

    #[test]
    fn kossakowski_pure_hamiltonian_rates_vanish() {
        let model = GeneratorModel::new(
            2,
            vec![(ops::sigma_x(), RateSchedule::Constant { value: 1.0 })],
            vec![],
            "unitary",
        )
        .unwrap();
        let (_, _, rates) = model.kossakowski(0.3).unwrap();
        for r in rates {
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn kossakowski_single_channel_is_rank_one() {
        let (_, _, rates) = example5(1.0).kossakowski(2.0).unwrap();
        assert_abs_diff_eq!(rates[0], 1.0, epsilon = 1e-10);
        assert!(rates[1].abs() < 1e-10);
        assert!(rates[2].abs() < 1e-10);
    }

    #[test]
    fn kossakowski_reconstruction() {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let basis = SuBasis::new(2).unwrap();
        for model in [example4(), example5(0.8)] {
            let t = 0.7;
            let (h_eff, a, _) = model.kossakowski(t).unwrap();
            let fs: Vec<CMatrix> = basis
                .elements
                .iter()
                .map(|s| s * Complex64::new(inv_sqrt2, 0.0))
                .collect();
            for _ in 0..10 {
                let x = BlochVector::from_fn(3, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
                let rho = from_bloch(&x, &basis).unwrap().entries;
                let mut rebuilt = hamiltonian_action(&h_eff, &rho);
                for i in 0..3 {
                    for j in 0..3 {
                        let fi = &fs[i];
                        let fj = &fs[j];
                        let term = fi * &rho * fj
                            - (fj * fi * &rho + &rho * fj * fi) * Complex64::new(0.5, 0.0);
                        rebuilt += term * a[(i, j)];
                    }
                }
                let direct = model.apply(t, &rho);
                let dev = (&rebuilt - &direct).map(|z| z.norm()).max();
                assert!(dev < 1e-10, "reconstruction deviation {dev}");
            }
        }
    }

    #[test]
    fn model_spec_round_trip() {
        let model = example4();
        let json = model.to_json().unwrap();
        let back = GeneratorModel::from_json(&json).unwrap();
        assert_eq!(back.n, 2);
        assert_eq!(back.channels.len(), 3);
        let f0 = model.affine_form(1.3).unwrap();
        let f1 = back.affine_form(1.3).unwrap();
        assert!((&f0.a - &f1.a).abs().max() < 1e-15);
    }

    #[test]
    fn to_bloch_matches_excitation_convention() {
        // sanity: sigma_minus drives z toward -1 (ground), so mean
        // excitation (z+1)/2 decays from 1.
        let basis = SuBasis::new(2).unwrap();
        let model = GeneratorModel::new(
            2,
            vec![],
            vec![(ops::sigma_minus(), RateSchedule::Constant { value: 1.0 })],
            "decay",
        )
        .unwrap();
        let excited = crate::bloch::DensityMatrix::basis_state(2, 0);
        let x = to_bloch(&excited, &basis).unwrap();
        assert_abs_diff_eq!(x[2], 1.0, epsilon = 1e-14);
        let v = model.compile().unwrap().rhs(0.0, &x);
        assert!(v[2] < -1.0 + 1e-12); // z' = -(1+z) = -2 at z = 1
    }
}
