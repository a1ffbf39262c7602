//! Four rival non-Markovianity criteria and the comparison grid.
//!
//! Each criterion reduces to a scalar witness with a documented threshold:
//!
//! | criterion       | witness                                   | NM iff          |
//! |-----------------|-------------------------------------------|-----------------|
//! | trace distance  | max positive variation of D(t) over pairs | `> 1e-6`        |
//! | decay rates     | most negative canonical rate on a grid    | `< -1e-9`       |
//! | CP divisibility | min Choi eigenvalue of intermediate maps  | `< -1e-8`       |
//! | Bloch volume    | max `Tr A(t)` (= `d ln det M / dt`)       | `> 1e-9`        |
//!
//! Thresholds sit two decades above integrator noise at the default
//! tolerance, separating genuine negativity from numerical dust.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochVector, SuBasis};
use crate::detect::Verdict;
use crate::error::{Error, Result};
use crate::model::GeneratorModel;
use crate::propagate::{
    integrate_with_mesh, propagator_between, IntegrateOpts, Trajectory,
};
use crate::store::{sample_initial_states, SamplerSpec};

pub const BLP_THRESHOLD: f64 = 1e-6;
pub const DECAY_THRESHOLD: f64 = -1e-9;
pub const CHOI_THRESHOLD: f64 = -1e-8;
pub const VOLUME_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RivalCriterion {
    TraceDistance,
    DecayRates,
    CPDivisibility,
    BlochVolume,
}

impl RivalCriterion {
    pub fn label(self) -> &'static str {
        match self {
            RivalCriterion::TraceDistance => "trace-dist",
            RivalCriterion::DecayRates => "decay-rates",
            RivalCriterion::CPDivisibility => "cp-div",
            RivalCriterion::BlochVolume => "bloch-vol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionVerdict {
    M,
    NM,
}

impl std::fmt::Display for CriterionVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CriterionVerdict::M => "M",
            CriterionVerdict::NM => "NM",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub criterion: RivalCriterion,
    pub verdict: CriterionVerdict,
    /// Max BLP positive variation, most negative rate, min Choi eigenvalue,
    /// or max `Tr A`, respectively.
    pub witness: f64,
    pub horizon: f64,
    pub grid_points: usize,
    /// Grid intervals where the intermediate map could not be formed.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inconclusive: Vec<(f64, f64)>,
}

pub fn uniform_grid(horizon: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect()
}

/// Trace distance from the Bloch difference: half the absolute eigenvalue sum
/// of `(1/n) sum_i delta_i sigma_i`.
fn trace_distance_delta(delta: &BlochVector, basis: &SuBasis) -> f64 {
    let n = basis.n;
    if n == 2 {
        return 0.5 * delta.norm();
    }
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for (i, sig) in basis.elements.iter().enumerate() {
        m += sig * Complex::new(delta[i] / n as f64, 0.0);
    }
    let eig = m.symmetric_eigen();
    0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
}

fn sample_near(traj: &Trajectory, t: f64) -> &BlochVector {
    let i = traj.segment_of(t);
    let (a, b) = (&traj.samples[i], &traj.samples[i + 1]);
    if (t - a.t).abs() <= (t - b.t).abs() {
        &a.x
    } else {
        &b.x
    }
}

/// Positive variation of the pairwise trace distance (the BLP construction),
/// maximized over antipodal pure-state pairs plus sampled random pairs.
pub fn blp_measure(
    model: &GeneratorModel,
    pair_sampler: &SamplerSpec,
    horizon: f64,
    grid_size: usize,
) -> Result<CriterionResult> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let gen = model.compile()?;
    let basis = SuBasis::new(model.n)?;
    let dim = gen.dim;

    let mut pairs: Vec<(BlochVector, BlochVector)> = Vec::new();
    if model.n == 2 {
        for k in 0..3 {
            let mut e = DVector::zeros(3);
            e[k] = 1.0;
            pairs.push((e.clone(), -e));
        }
    }
    let sampled = sample_initial_states(pair_sampler, dim)?;
    for s in &sampled {
        pairs.push((s.clone(), -s)); // antipodal partner of each sample
    }
    for chunk in sampled.chunks(2) {
        if let [a, b] = chunk {
            pairs.push((a.clone(), b.clone()));
        }
    }

    // grid times are forced mesh points, so D is read off exact samples
    let grid = uniform_grid(horizon, grid_size.max(2));
    let witness = pairs
        .par_iter()
        .map(|(a, b)| -> Result<f64> {
            let opts = IntegrateOpts::default();
            let ta = integrate_with_mesh(&gen, a, (0.0, horizon), opts, &grid)?;
            let tb = integrate_with_mesh(&gen, b, (0.0, horizon), opts, &grid)?;
            let d: Vec<f64> = grid
                .iter()
                .map(|&t| trace_distance_delta(&(sample_near(&ta, t) - sample_near(&tb, t)), &basis))
                .collect();
            Ok(d.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;

    Ok(CriterionResult {
        criterion: RivalCriterion::TraceDistance,
        verdict: if witness > BLP_THRESHOLD {
            CriterionVerdict::NM
        } else {
            CriterionVerdict::M
        },
        witness,
        horizon,
        grid_points: grid.len(),
        inconclusive: Vec::new(),
    })
}

/// Most negative canonical (Kossakowski) rate over the grid.
pub fn decay_rate_criterion(model: &GeneratorModel, t_grid: &[f64]) -> Result<CriterionResult> {
    if t_grid.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    let mut witness = f64::INFINITY;
    for &t in t_grid {
        let (_, _, rates) = model.kossakowski(t)?;
        if let Some(&min) = rates.last() {
            witness = witness.min(min);
        }
    }
    if !witness.is_finite() {
        witness = 0.0;
    }
    Ok(CriterionResult {
        criterion: RivalCriterion::DecayRates,
        verdict: if witness < DECAY_THRESHOLD {
            CriterionVerdict::NM
        } else {
            CriterionVerdict::M
        },
        witness,
        horizon: *t_grid.last().unwrap(),
        grid_points: t_grid.len(),
        inconclusive: Vec::new(),
    })
}

/// Lift of the affine Bloch map `x -> M x + c` to operator space:
/// `V(X) = (Tr X)/n * I + (1/n) sum_i (M chi + (Tr X) c)_i sigma_i` with
/// `chi_i = (n/2) Tr(X sigma_i)`, then the Choi matrix
/// `C = sum_ij E_ij (x) V(E_ij)`.
pub fn choi_of_affine(
    m: &DMatrix<f64>,
    c: &DVector<f64>,
    basis: &SuBasis,
) -> DMatrix<Complex64> {
    let n = basis.n;
    let d = basis.elements.len();
    let nf = n as f64;
    let apply = |x: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        let tr = x.trace();
        let mut chi = DVector::<Complex64>::zeros(d);
        for (i, sig) in basis.elements.iter().enumerate() {
            chi[i] = (x * sig).trace() * Complex::new(nf / 2.0, 0.0);
        }
        let mut out = DMatrix::<Complex64>::identity(n, n) * (tr / nf);
        for i in 0..d {
            let mut coeff = Complex64::new(0.0, 0.0);
            for j in 0..d {
                coeff += Complex::new(m[(i, j)], 0.0) * chi[j];
            }
            coeff += tr * Complex::new(c[i], 0.0);
            out += &basis.elements[i] * (coeff / nf);
        }
        out
    };
    let mut choi = DMatrix::<Complex64>::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let mut eij = DMatrix::<Complex64>::zeros(n, n);
            eij[(i, j)] = Complex64::new(1.0, 0.0);
            let v = apply(&eij);
            for a in 0..n {
                for b in 0..n {
                    choi[(i * n + a, j * n + b)] += v[(a, b)];
                }
            }
        }
    }
    choi
}

fn min_choi_eig(m: &DMatrix<f64>, c: &DVector<f64>, basis: &SuBasis) -> f64 {
    let choi = choi_of_affine(m, c, basis);
    // Hermitize against roundoff before the symmetric solver
    let herm = (&choi + choi.adjoint()) * Complex::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Min Choi eigenvalue of the intermediate maps between consecutive grid
/// times. Singular propagators become inconclusive intervals.
pub fn cp_divisibility_criterion(
    model: &GeneratorModel,
    t_grid: &[f64],
    delta: f64,
) -> Result<CriterionResult> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    for w in t_grid.windows(2) {
        if w[1] - w[0] < delta - 1e-12 {
            return Err(Error::InvalidInput(format!(
                "grid step {} below delta {delta}",
                w[1] - w[0]
            )));
        }
    }
    let gen = model.compile()?;
    let basis = SuBasis::new(model.n)?;
    let mut witness = f64::INFINITY;
    let mut inconclusive = Vec::new();
    // Each short-interval map is integrated directly over its window; going
    // through grid propagators and an inversion would lose all precision
    // once the flow has contracted by more than ~1e12.
    for w in t_grid.windows(2) {
        match propagator_between(&gen, w[0], w[1], 1e-11) {
            Ok((m, c)) => witness = witness.min(min_choi_eig(&m, &c, &basis)),
            Err(_) => inconclusive.push((w[0], w[1])),
        }
    }
    if !witness.is_finite() {
        witness = 0.0;
    }
    Ok(CriterionResult {
        criterion: RivalCriterion::CPDivisibility,
        verdict: if witness < CHOI_THRESHOLD {
            CriterionVerdict::NM
        } else {
            CriterionVerdict::M
        },
        witness,
        horizon: *t_grid.last().unwrap_or(&0.0),
        grid_points: t_grid.len(),
        inconclusive,
    })
}

/// `Tr A(t) = d ln det M / dt`; any positive value signals Bloch-volume
/// growth.
pub fn bloch_volume_criterion(model: &GeneratorModel, t_grid: &[f64]) -> Result<CriterionResult> {
    if t_grid.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    let gen = model.compile()?;
    let witness = t_grid
        .iter()
        .map(|&t| gen.field_at(t).a.trace())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CriterionResult {
        criterion: RivalCriterion::BlochVolume,
        verdict: if witness > VOLUME_THRESHOLD {
            CriterionVerdict::NM
        } else {
            CriterionVerdict::M
        },
        witness,
        horizon: *t_grid.last().unwrap(),
        grid_points: t_grid.len(),
    inconclusive: Vec::new(),
    })
}

/// One model to be placed in the comparison grid.
pub struct TableInput {
    pub id: String,
    pub model: GeneratorModel,
    pub horizon: f64,
    /// Verdict of the trajectory criterion for the same model.
    pub ours: Verdict,
    /// Annotate the rival verdicts with `*` (naive application to an
    /// unphysical generator).
    pub unphysical: bool,
    pub pair_sampler: SamplerSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub id: String,
    pub ours: Verdict,
    pub unphysical: bool,
    pub rivals: Vec<CriterionResult>,
}

impl TableRow {
    pub fn rival_verdicts(&self) -> Vec<CriterionVerdict> {
        self.rivals.iter().map(|r| r.verdict).collect()
    }
}

/// Evaluates all four rival criteria for each model.
pub fn criteria_table(inputs: &[TableInput]) -> Result<Vec<TableRow>> {
    inputs
        .iter()
        .map(|inp| {
            let grid = uniform_grid(inp.horizon, 201);
            let delta = grid[1] - grid[0];
            let rivals = vec![
                blp_measure(&inp.model, &inp.pair_sampler, inp.horizon, 400)?,
                decay_rate_criterion(&inp.model, &grid)?,
                cp_divisibility_criterion(&inp.model, &grid, delta * 0.5)?,
                bloch_volume_criterion(&inp.model, &grid)?,
            ];
            Ok(TableRow {
                id: inp.id.clone(),
                ours: inp.ours,
                unphysical: inp.unphysical,
                rivals,
            })
        })
        .collect()
}

/// Aligned plain-text rendering of the comparison grid.
pub fn render_table(rows: &[TableRow]) -> String {
    let headers = ["model", "ours", "trace-dist", "decay-rates", "cp-div", "bloch-vol"];
    let mut cells: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let star = if row.unphysical { "*" } else { "" };
        let mut line = vec![row.id.clone(), row.ours.code().to_string()];
        for r in &row.rivals {
            line.push(format!("{}{star}", r.verdict));
        }
        cells.push(line);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (ri, row) in cells.iter().enumerate() {
        for (ci, cell) in row.iter().enumerate() {
            if ci > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{:<w$}", cell, w = widths[ci]));
        }
        out.push('\n');
        if ri == 0 {
            for (ci, w) in widths.iter().enumerate() {
                if ci > 0 {
                    out.push_str("  ");
                }
                out.push_str(&"-".repeat(*w));
            }
            out.push('\n');
        }
    }
    out
}

pub fn table_to_json(rows: &[TableRow]) -> serde_json::Value {
    serde_json::json!(rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "id": r.id,
                "ours": r.ours,
                "unphysical": r.unphysical,
                "rivals": r.rivals.iter().map(|c| serde_json::json!({
                    "criterion": c.criterion,
                    "verdict": c.verdict,
                    "witness": c.witness,
                })).collect::<Vec<_>>(),
            })
        })
        .collect::<Vec<_>>())
}
