//! Adaptive Dormand-Prince 5(4) integration with dense output, plus
//! fundamental-matrix propagators for the divisibility and volume criteria.
//!
//! Every accepted step stores the state *and* its derivative; continuous
//! evaluation uses cubic Hermite interpolation on the stored pairs, which is
//! C^1 within each segment and exact at the sample points. Schedule
//! breakpoints are mandatory mesh points: the integrator lands on them
//! exactly and restarts, so discontinuous rates such as a square-wave bath
//! never degrade the order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bloch::BlochVector;
use crate::error::{Error, Result};
use crate::model::AffineGenerator;

/// Default cap on the output interval: `(t1 - t0) / 512`.
pub const DEFAULT_HMAX_DIVISOR: f64 = 512.0;
/// Default local error tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: BlochVector,
    pub v: BlochVector,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegratorMeta {
    pub tol: f64,
    pub h_max: f64,
    pub accepted: usize,
    pub rejected: usize,
}

/// Time-ordered `(t, x, x')` samples with dense-output interpolation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub initial_state: BlochVector,
    pub model_label: Option<String>,
    pub meta: Option<IntegratorMeta>,
}

impl Trajectory {
    /// Build from raw samples (ingestion path). Timestamps must be strictly
    /// increasing.
    pub fn from_samples(samples: Vec<Sample>, model_label: Option<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("trajectory needs >= 1 sample".into()));
        }
        for w in samples.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidInput(format!(
                    "timestamps not strictly increasing at t = {}",
                    w[1].t
                )));
            }
        }
        let initial_state = samples[0].x.clone();
        Ok(Trajectory {
            samples,
            initial_state,
            model_label,
            meta: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn t0(&self) -> f64 {
        self.samples.first().map(|s| s.t).unwrap_or(0.0)
    }

    pub fn t1(&self) -> f64 {
        self.samples.last().map(|s| s.t).unwrap_or(0.0)
    }

    /// Index of the segment containing `t` (segment i spans samples i, i+1).
    pub fn segment_of(&self, t: f64) -> usize {
        let n = self.samples.len();
        match self
            .samples
            .binary_search_by(|s| s.t.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(n.saturating_sub(2)),
            Err(i) => i.saturating_sub(1).min(n.saturating_sub(2)),
        }
    }

    /// Cubic Hermite evaluation of `(x, x')` at `t`.
    pub fn dense_eval(&self, t: f64) -> Result<(BlochVector, BlochVector)> {
        let (t0, t1) = (self.t0(), self.t1());
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            return Err(Error::OutOfSpan { t, t0, t1 });
        }
        if self.samples.len() == 1 {
            let s = &self.samples[0];
            return Ok((s.x.clone(), s.v.clone()));
        }
        let i = self.segment_of(t.clamp(t0, t1));
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        if t == a.t {
            return Ok((a.x.clone(), a.v.clone()));
        }
        if t == b.t {
            return Ok((b.x.clone(), b.v.clone()));
        }
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let x = &a.x * h00 + &a.v * (h10 * h) + &b.x * h01 + &b.v * (h11 * h);
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let v = &a.x * d00 + &a.v * d10 + &b.x * d01 + &b.v * d11;
        Ok((x, v))
    }

    /// Axis-aligned bounding box of the sample points.
    pub fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        let d = self.dim();
        let mut lo = DVector::from_element(d, f64::INFINITY);
        let mut hi = DVector::from_element(d, f64::NEG_INFINITY);
        for s in &self.samples {
            for k in 0..d {
                lo[k] = lo[k].min(s.x[k]);
                hi[k] = hi[k].max(s.x[k]);
            }
        }
        (lo, hi)
    }

    /// Median sample spacing in time.
    pub fn median_dt(&self) -> f64 {
        let mut dts: Vec<f64> = self.samples.windows(2).map(|w| w[1].t - w[0].t).collect();
        if dts.is_empty() {
            return 0.0;
        }
        dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dts[dts.len() / 2]
    }
}

// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct StepStats {
    accepted: usize,
    rejected: usize,
}

/// Generic adaptive DP45 driver. `mesh` times are landed on exactly and the
/// derivative is re-evaluated after each (restart across discontinuities).
/// `sink` receives every accepted `(t, y, y')`, including the initial point.
fn dp45_drive<F>(
    rhs: F,
    y0: &DVector<f64>,
    t0: f64,
    t1: f64,
    tol: f64,
    h_max: f64,
    mesh: &[f64],
    mut sink: impl FnMut(f64, &DVector<f64>, &DVector<f64>),
) -> Result<StepStats>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let span = t1 - t0;
    let mut stats = StepStats {
        accepted: 0,
        rejected: 0,
    };
    let mut y = y0.clone();
    let mut t = t0;
    let mut v = rhs(t, &y);
    sink(t, &y, &v);
    if span == 0.0 {
        return Ok(stats);
    }

    let mut stops: Vec<f64> = mesh
        .iter()
        .cloned()
        .filter(|&m| m > t0 + 1e-14 * span && m < t1 - 1e-14 * span)
        .collect();
    stops.push(t1);
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * span);

    let mut h = (span / 100.0).min(h_max);
    let h_min = 1e-14 * span.abs().max(1.0);
    let mut ks: [DVector<f64>; 7] = core::array::from_fn(|_| DVector::zeros(y.len()));

    for &stop in &stops {
        // restart: fresh derivative for the (possibly discontinuous) segment
        v = rhs(t, &y);
        while t < stop - 1e-13 * span {
            h = h.min(h_max).min(stop - t);
            if h < h_min {
                return Err(Error::NumericalFailure {
                    msg: "step size underflow".into(),
                    last_t: t,
                });
            }
            ks[0] = v.clone();
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in ks.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        ys += kj * (a * h);
                    }
                }
                ks[s] = rhs(t + C[s] * h, &ys);
            }
            let mut ynew = y.clone();
            let mut err_vec = DVector::zeros(y.len());
            for (s, k) in ks.iter().enumerate() {
                if B5[s] != 0.0 {
                    ynew += k * (B5[s] * h);
                }
                let db = B5[s] - B4[s];
                if db != 0.0 {
                    err_vec += k * (db * h);
                }
            }
            let mut err = 0.0f64;
            for i in 0..y.len() {
                let sc = tol + tol * y[i].abs().max(ynew[i].abs());
                let e = err_vec[i] / sc;
                err += e * e;
            }
            err = (err / y.len() as f64).sqrt();
            if err <= 1.0 {
                t += h;
                y = ynew;
                v = ks[6].clone(); // FSAL
                sink(t, &y, &v);
                stats.accepted += 1;
                let fac = if err > 0.0 {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                h *= fac;
            } else {
                stats.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        t = stop;
    }
    Ok(stats)
}

/// Integration options beyond the defaults.
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub tol: f64,
    /// Cap on sample spacing; `None` means `(t1 - t0) / 512`.
    pub h_max: Option<f64>,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        IntegrateOpts {
            tol: DEFAULT_TOL,
            h_max: None,
        }
    }
}

/// Integrate `x' = A(t) x + b(t)` over `t_span`, storing the derivative at
/// every accepted step.
pub fn integrate(
    gen: &AffineGenerator,
    x0: &BlochVector,
    t_span: (f64, f64),
    opts: IntegrateOpts,
) -> Result<Trajectory> {
    integrate_with_mesh(gen, x0, t_span, opts, &[])
}

/// Like [`integrate`], but also lands exactly on the caller-supplied mesh
/// times (useful when samples are needed at externally fixed grid points).
pub fn integrate_with_mesh(
    gen: &AffineGenerator,
    x0: &BlochVector,
    t_span: (f64, f64),
    opts: IntegrateOpts,
    extra_mesh: &[f64],
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if t1 < t0 {
        return Err(Error::InvalidInput(format!(
            "t_span must be increasing, got ({t0}, {t1})"
        )));
    }
    if x0.len() != gen.dim {
        return Err(Error::DimensionMismatch(format!(
            "state dim {} vs generator dim {}",
            x0.len(),
            gen.dim
        )));
    }
    let h_max = opts
        .h_max
        .unwrap_or_else(|| ((t1 - t0) / DEFAULT_HMAX_DIVISOR).max(f64::MIN_POSITIVE));
    let mut mesh = gen.breakpoints(t0, t1);
    mesh.extend_from_slice(extra_mesh);
    let mut samples = Vec::new();
    let stats = dp45_drive(
        |t, x| gen.rhs(t, x),
        x0,
        t0,
        t1,
        opts.tol,
        h_max,
        &mesh,
        |t, x, v| {
            samples.push(Sample {
                t,
                x: x.clone(),
                v: v.clone(),
            })
        },
    )?;
    Ok(Trajectory {
        samples,
        initial_state: x0.clone(),
        model_label: Some(gen.label.clone()),
        meta: Some(IntegratorMeta {
            tol: opts.tol,
            h_max,
            accepted: stats.accepted,
            rejected: stats.rejected,
        }),
    })
}

/// Fundamental-matrix propagator: `x(t) = M x(0) + c`.
#[derive(Debug, Clone)]
pub struct AffinePropagator {
    pub t: f64,
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
}

/// Jointly integrates `M' = A(t) M`, `c' = A(t) c + b(t)` and records the
/// propagator at each grid time. The grid must be increasing from 0.
pub fn propagator_grid(
    gen: &AffineGenerator,
    t_grid: &[f64],
    tol: f64,
) -> Result<Vec<AffinePropagator>> {
    if t_grid.is_empty() || t_grid[0] != 0.0 {
        return Err(Error::InvalidInput("t_grid must start at 0".into()));
    }
    for w in t_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidInput("t_grid must be increasing".into()));
        }
    }
    let d = gen.dim;
    let t_end = *t_grid.last().unwrap();
    // state = [vec(M) | c], column-major M
    let mut y0 = DVector::zeros(d * d + d);
    for i in 0..d {
        y0[i * d + i] = 1.0;
    }
    let rhs = |t: f64, y: &DVector<f64>| {
        let f = gen.field_at(t);
        let mut dy = DVector::zeros(d * d + d);
        for col in 0..d {
            let m_col = y.rows(col * d, d);
            let a_m = &f.a * m_col;
            dy.rows_mut(col * d, d).copy_from(&a_m);
        }
        let c = y.rows(d * d, d);
        let dc = &f.a * c + &f.b;
        dy.rows_mut(d * d, d).copy_from(&dc);
        dy
    };
    let mut mesh = gen.breakpoints(0.0, t_end);
    mesh.extend_from_slice(t_grid);
    let mut out: Vec<AffinePropagator> = Vec::with_capacity(t_grid.len());
    let mut next = 0usize;
    dp45_drive(
        rhs,
        &y0,
        0.0,
        t_end,
        tol,
        (t_end / DEFAULT_HMAX_DIVISOR).max(f64::MIN_POSITIVE),
        &mesh,
        |t, y, _| {
            while next < t_grid.len() && (t - t_grid[next]).abs() <= 1e-12 * t_end.max(1.0) {
                let m = DMatrix::from_fn(d, d, |i, j| y[j * d + i]);
                let c = DVector::from_fn(d, |i, _| y[d * d + i]);
                out.push(AffinePropagator {
                    t: t_grid[next],
                    m,
                    c,
                });
                next += 1;
            }
        },
    )?;
    if out.len() != t_grid.len() {
        return Err(Error::NumericalFailure {
            msg: format!("captured {} of {} grid propagators", out.len(), t_grid.len()),
            last_t: out.last().map(|p| p.t).unwrap_or(0.0),
        });
    }
    Ok(out)
}

/// Propagator of the flow over `[s, t]` only: `x(t) = M x(s) + c`, computed
/// by direct integration from `s`. Unlike composing grid propagators via
/// [`intermediate_map`], this stays well conditioned when the flow is
/// strongly contracting (no inversion of a nearly singular matrix).
pub fn propagator_between(
    gen: &AffineGenerator,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if t < s {
        return Err(Error::InvalidInput(format!(
            "propagator_between requires t >= s, got s={s} t={t}"
        )));
    }
    let d = gen.dim;
    let mut y0 = DVector::zeros(d * d + d);
    for i in 0..d {
        y0[i * d + i] = 1.0;
    }
    let rhs = |tt: f64, y: &DVector<f64>| {
        let f = gen.field_at(tt);
        let mut dy = DVector::zeros(d * d + d);
        for col in 0..d {
            let a_m = &f.a * y.rows(col * d, d);
            dy.rows_mut(col * d, d).copy_from(&a_m);
        }
        let dc = &f.a * y.rows(d * d, d) + &f.b;
        dy.rows_mut(d * d, d).copy_from(&dc);
        dy
    };
    let mesh = gen.breakpoints(s, t);
    let mut last = y0.clone();
    dp45_drive(
        rhs,
        &y0,
        s,
        t,
        tol,
        ((t - s) / DEFAULT_HMAX_DIVISOR).max(f64::MIN_POSITIVE),
        &mesh,
        |_, y, _| last = y.clone(),
    )?;
    let m = DMatrix::from_fn(d, d, |i, j| last[j * d + i]);
    let c = DVector::from_fn(d, |i, _| last[d * d + i]);
    Ok((m, c))
}

/// Intermediate map between two propagators: `x(t) = M_ts x(s) + c_ts`.
pub fn intermediate_map(
    p_s: &AffinePropagator,
    p_t: &AffinePropagator,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if p_t.t < p_s.t {
        return Err(Error::InvalidInput(format!(
            "intermediate_map requires t >= s, got s={} t={}",
            p_s.t, p_t.t
        )));
    }
    let inv = p_s
        .m
        .clone()
        .try_inverse()
        .ok_or(Error::SingularPropagator(p_s.t))?;
    let m_ts = &p_t.m * inv;
    let c_ts = &p_t.c - &m_ts * &p_s.c;
    Ok((m_ts, c_ts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ops, GeneratorModel, RateSchedule};
    use approx::assert_abs_diff_eq;

    fn ex4_gen() -> AffineGenerator {
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
        .compile()
        .unwrap()
    }

    fn ex4_closed_form(x0: &BlochVector, t: f64) -> BlochVector {
        let a = 0.5 * (1.0 + (-2.0 * t).exp());
        let b = (-2.0 * t).exp();
        BlochVector::from_vec(vec![a * x0[0], a * x0[1], b * x0[2]])
    }

    fn dephasing_gen(gamma: f64) -> AffineGenerator {
        GeneratorModel::new(
            2,
            vec![],
            vec![(ops::sigma_z(), RateSchedule::Constant { value: gamma })],
            "dephasing",
        )
        .unwrap()
        .compile()
        .unwrap()
    }

    #[test]
    fn example4_matches_closed_form() {
        let gen = ex4_gen();
        let x0 = BlochVector::from_vec(vec![1.0, 0.0, 0.0]);
        let traj = integrate(&gen, &x0, (0.0, 1.0), IntegrateOpts::default()).unwrap();
        let end = &traj.samples.last().unwrap().x;
        assert_abs_diff_eq!(end[0], 0.5 * (1.0 + (-2.0f64).exp()), epsilon = 1e-9);
        assert!(end[1].abs() < 1e-12 && end[2].abs() < 1e-12);
    }

    #[test]
    fn example1_leaves_bloch_ball() {
        let gen = dephasing_gen(-1.0);
        let x0 = BlochVector::from_vec(vec![1.0, 0.0, 0.0]);
        let traj = integrate(&gen, &x0, (0.0, 1.0), IntegrateOpts::default()).unwrap();
        let end = &traj.samples.last().unwrap().x;
        assert_abs_diff_eq!(end[0], (2.0f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn zero_span_yields_single_sample() {
        let gen = ex4_gen();
        let x0 = BlochVector::from_vec(vec![0.3, 0.1, -0.2]);
        let traj = integrate(&gen, &x0, (0.0, 0.0), IntegrateOpts::default()).unwrap();
        assert_eq!(traj.samples.len(), 1);
        let s = &traj.samples[0];
        assert_eq!(s.t, 0.0);
        assert!((gen.rhs(0.0, &x0) - &s.v).norm() < 1e-15);
    }

    #[test]
    fn dense_eval_exact_at_samples_and_accurate_between() {
        let gen = ex4_gen();
        let x0 = BlochVector::from_vec(vec![1.0, 0.0, 1.0]);
        let traj = integrate(&gen, &x0, (0.0, 10.0), IntegrateOpts::default()).unwrap();
        for s in traj.samples.iter().step_by(17) {
            let (x, v) = traj.dense_eval(s.t).unwrap();
            assert_eq!(x, s.x);
            assert_eq!(v, s.v);
        }
        for i in (0..traj.samples.len() - 1).step_by(13) {
            let tm = 0.5 * (traj.samples[i].t + traj.samples[i + 1].t);
            let (x, _) = traj.dense_eval(tm).unwrap();
            let exact = ex4_closed_form(&x0, tm);
            assert!((x - exact).norm() < 1e-8);
        }
        assert!(traj.dense_eval(-1.0).is_err());
        assert!(traj.dense_eval(10.5).is_err());
    }

    #[test]
    fn fixed_point_input_stays_constant() {
        let gen = GeneratorModel::new(
            2,
            vec![(ops::sigma_x(), RateSchedule::Constant { value: 1.0 })],
            vec![(ops::sigma_minus(), RateSchedule::Constant { value: 1.0 })],
            "ex5",
        )
        .unwrap()
        .compile()
        .unwrap();
        let fp = BlochVector::from_vec(vec![0.0, 4.0 / 9.0, -1.0 / 9.0]);
        let traj = integrate(&gen, &fp, (0.0, 5.0), IntegrateOpts::default()).unwrap();
        for s in &traj.samples {
            assert!((&s.x - &fp).norm() < 1e-10);
            assert!(s.v.norm() < 1e-9);
        }
    }

    #[test]
    fn convergence_order_observed() {
        let gen = ex4_gen();
        let x0 = BlochVector::from_vec(vec![1.0, 0.0, 1.0]);
        let exact = ex4_closed_form(&x0, 5.0);
        let mut errs = Vec::new();
        for tol in [1e-5, 1e-7, 1e-9, 1e-11] {
            let traj = integrate(
                &gen,
                &x0,
                (0.0, 5.0),
                IntegrateOpts { tol, h_max: None },
            )
            .unwrap();
            errs.push((&traj.samples.last().unwrap().x - &exact).norm());
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0] || w[1] < 1e-12, "errors not decreasing: {errs:?}");
        }
        assert!(errs[2] < 1e-8);
    }

    #[test]
    fn square_wave_breakpoints_preserve_accuracy() {
        // z' = -(1+z) on [0,10], z' = 1-z on [10,20]
        let gen = GeneratorModel::new(
            2,
            vec![],
            vec![
                (
                    ops::sigma_minus(),
                    RateSchedule::PiecewiseConstant {
                        durations: vec![10.0, 10.0],
                        values: vec![1.0, 0.0],
                        repeat: true,
                    },
                ),
                (
                    ops::sigma_plus(),
                    RateSchedule::PiecewiseConstant {
                        durations: vec![10.0, 10.0],
                        values: vec![0.0, 1.0],
                        repeat: true,
                    },
                ),
            ],
            "ex3",
        )
        .unwrap()
        .compile()
        .unwrap();
        let x0 = BlochVector::from_vec(vec![0.0, 0.0, 1.0]);
        let traj = integrate(&gen, &x0, (0.0, 15.0), IntegrateOpts::default()).unwrap();
        let z10 = 2.0 * (-10.0f64).exp() - 1.0;
        let z15 = 1.0 - (1.0 - z10) * (-5.0f64).exp();
        let (x, _) = traj.dense_eval(15.0).unwrap();
        assert_abs_diff_eq!(x[2], z15, epsilon = 1e-9);
    }

    #[test]
    fn reintegration_self_consistency() {
        let gen = ex4_gen();
        let x0 = BlochVector::from_vec(vec![0.7, -0.3, 0.5]);
        let tol = 1e-10;
        let traj = integrate(&gen, &x0, (0.0, 8.0), IntegrateOpts { tol, h_max: None }).unwrap();
        let k = traj.samples.len() / 2;
        let mid = &traj.samples[k];
        let re = integrate(
            &gen,
            &mid.x,
            (mid.t, 8.0),
            IntegrateOpts { tol, h_max: None },
        )
        .unwrap();
        let end_a = &traj.samples.last().unwrap().x;
        let end_b = &re.samples.last().unwrap().x;
        assert!((end_a - end_b).norm() < 10.0 * tol * 1e3); // generous absolute bound
    }

    #[test]
    fn propagator_dephasing_and_identity() {
        let gen = dephasing_gen(1.0);
        let props = propagator_grid(&gen, &[0.0, 1.0], 1e-11).unwrap();
        assert_eq!(props.len(), 2);
        let p0 = &props[0];
        assert!((&p0.m - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
        assert!(p0.c.norm() < 1e-12);
        let p1 = &props[1];
        let e2 = (-2.0f64).exp();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![e2, e2, 1.0]));
        assert!((&p1.m - expect).abs().max() < 1e-9);
        assert!(p1.c.norm() < 1e-12);
    }

    #[test]
    fn propagator_example4_matches_closed_form() {
        let gen = ex4_gen();
        let props = propagator_grid(&gen, &[0.0, 1.0], 1e-11).unwrap();
        let p = &props[1];
        let a = 0.5 * (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(p.m[(0, 0)], a, epsilon = 1e-8);
        assert_abs_diff_eq!(p.m[(1, 1)], a, epsilon = 1e-8);
        assert_abs_diff_eq!(p.m[(2, 2)], (-2.0f64).exp(), epsilon = 1e-8);
        assert!(p.c.norm() < 1e-10);
    }

    #[test]
    fn intermediate_map_semigroup_and_ratio() {
        let gen = dephasing_gen(1.0);
        let props = propagator_grid(&gen, &[0.0, 1.0, 2.0], 1e-11).unwrap();
        let (m, c) = intermediate_map(&props[1], &props[2]).unwrap();
        let e2 = (-2.0f64).exp();
        assert_abs_diff_eq!(m[(0, 0)], e2, epsilon = 1e-7);
        assert_abs_diff_eq!(m[(2, 2)], 1.0, epsilon = 1e-8);
        assert!(c.norm() < 1e-10);

        // s = t: identity
        let (m, c) = intermediate_map(&props[1], &props[1]).unwrap();
        assert!((&m - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-9);
        assert!(c.norm() < 1e-10);

        // Example 4: transverse shrinks slower than the z factor between s=1, t=2
        let gen4 = ex4_gen();
        let props4 = propagator_grid(&gen4, &[0.0, 1.0, 2.0], 1e-11).unwrap();
        let (m, _) = intermediate_map(&props4[1], &props4[2]).unwrap();
        let expect_perp = (1.0 + (-4.0f64).exp()) / (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(m[(0, 0)], expect_perp, epsilon = 1e-7);
        assert_abs_diff_eq!(m[(2, 2)], (-2.0f64).exp(), epsilon = 1e-7);
        assert!(m[(0, 0)] > m[(2, 2)]);
    }

    #[test]
    fn determinant_identity() {
        // det M(t) = exp(int_0^t Tr A ds), Simpson quadrature oracle
        for gen in [ex4_gen(), dephasing_gen(0.8)] {
            let t_end = 3.0;
            let props = propagator_grid(&gen, &[0.0, t_end], 1e-11).unwrap();
            let det = props[1].m.determinant();
            let n = 2000;
            let h = t_end / n as f64;
            let mut integral = 0.0;
            for i in 0..n {
                let (a, b) = (i as f64 * h, (i as f64 + 1.0) * h);
                let f = |t: f64| gen.field_at(t).a.trace();
                integral += h / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
            }
            assert!((det - integral.exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn from_samples_rejects_non_monotone() {
        let mk = |t: f64| Sample {
            t,
            x: BlochVector::zeros(2),
            v: BlochVector::zeros(2),
        };
        assert!(Trajectory::from_samples(vec![mk(0.0), mk(0.5), mk(0.4)], None).is_err());
        assert!(Trajectory::from_samples(vec![], None).is_err());
    }
}
