//! Trajectory-set container, initial-state sampling, text persistence,
//! external time-series ingestion, and time reversal.
//!
//! File format (text, UTF-8, LF): line 1 is `# trajset v1 dim=<d>
//! provenance=<label>`; trajectory blocks are separated by single blank
//! lines; each block has an optional `## traj id=<k>` line followed by CSV
//! rows `t,x1,...,xd[,v1,...,vd]`. Floats are written with Rust's shortest
//! round-trip formatting, so persist/load is bitwise lossless.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochVector;
use crate::error::{Error, Result};
use crate::propagate::{Sample, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    ModelGenerated { label: String },
    Ingested { source: String },
}

impl Provenance {
    pub fn label(&self) -> &str {
        match self {
            Provenance::ModelGenerated { label } => label,
            Provenance::Ingested { source } => source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerStrategy {
    /// Haar-uniform pure states (|x| = 1 for qubits; random pure kets for n > 2).
    PureUniform,
    /// Uniform inside the admissible ball of Bloch vectors.
    BallUniform,
    /// Regular grid over the bounding cube, filtered to the admissible set.
    Grid,
    /// ±axis pure states plus the maximally mixed state.
    Canonical,
    /// Caller-supplied list, passed through unchanged.
    ExplicitList,
}

impl std::str::FromStr for SamplerStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pure-uniform" => Ok(Self::PureUniform),
            "ball-uniform" => Ok(Self::BallUniform),
            "grid" => Ok(Self::Grid),
            "canonical" => Ok(Self::Canonical),
            "explicit-list" => Ok(Self::ExplicitList),
            other => Err(Error::UnknownStrategy(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub strategy: SamplerStrategy,
    pub count: usize,
    pub seed: u64,
    /// Only consulted for `ExplicitList`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<Vec<f64>>,
}

impl SamplerSpec {
    pub fn new(strategy: SamplerStrategy, count: usize, seed: u64) -> Self {
        SamplerSpec {
            strategy,
            count,
            seed,
            explicit: Vec::new(),
        }
    }

    pub fn explicit_list(states: Vec<Vec<f64>>) -> Self {
        SamplerSpec {
            strategy: SamplerStrategy::ExplicitList,
            count: states.len(),
            seed: 0,
            explicit: states,
        }
    }
}

/// The ±axis pure states plus the origin (maximally mixed), in a fixed order.
pub fn canonical_states(dim: usize) -> Vec<BlochVector> {
    let mut out = Vec::with_capacity(2 * dim + 1);
    for k in 0..dim {
        for sign in [1.0, -1.0] {
            let mut x = DVector::zeros(dim);
            x[k] = sign;
            out.push(x);
        }
    }
    out.push(DVector::zeros(dim));
    out
}

/// Deterministic initial-state sampling: identical (strategy, count, seed,
/// dim) always yields identical states.
pub fn sample_initial_states(spec: &SamplerSpec, dim: usize) -> Result<Vec<BlochVector>> {
    if spec.count == 0 && spec.strategy != SamplerStrategy::Canonical {
        return Err(Error::InvalidInput("sampler count must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let states = match spec.strategy {
        SamplerStrategy::PureUniform => (0..spec.count)
            .map(|_| haar_pure_bloch(dim, &mut rng))
            .collect(),
        SamplerStrategy::BallUniform => {
            // rejection sampling in the cube; for qubits the admissible set is
            // the unit ball, for n > 2 we keep |x| <= 1 (a safe inner ball)
            let mut out = Vec::with_capacity(spec.count);
            while out.len() < spec.count {
                let x = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                if x.norm() <= 1.0 {
                    out.push(x);
                }
            }
            out
        }
        SamplerStrategy::Grid => {
            let per_axis = (spec.count as f64).powf(1.0 / dim as f64).ceil().max(2.0) as usize;
            let mut out = Vec::new();
            let mut idx = vec![0usize; dim];
            'outer: loop {
                let x = DVector::from_fn(dim, |k, _| {
                    -1.0 + 2.0 * idx[k] as f64 / (per_axis - 1) as f64
                });
                if x.norm() <= 1.0 {
                    out.push(x);
                }
                for k in 0..dim {
                    idx[k] += 1;
                    if idx[k] < per_axis {
                        continue 'outer;
                    }
                    idx[k] = 0;
                }
                break;
            }
            out
        }
        SamplerStrategy::Canonical => canonical_states(dim),
        SamplerStrategy::ExplicitList => {
            let mut out = Vec::with_capacity(spec.explicit.len());
            for row in &spec.explicit {
                if row.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "explicit state has {} coords, expected {}",
                        row.len(),
                        dim
                    )));
                }
                out.push(DVector::from_vec(row.clone()));
            }
            out
        }
    };
    Ok(states)
}

/// Bloch vector of a Haar-random pure state in the SU(n) basis with
/// `dim = n^2 - 1` coordinates (Gaussian ket, normalized, projected).
fn haar_pure_bloch(dim: usize, rng: &mut ChaCha12Rng) -> BlochVector {
    if dim == 3 {
        // qubit: uniform on the unit sphere
        loop {
            let x = DVector::from_fn(3, |_, _| sample_gauss(rng));
            let r = x.norm();
            if r > 1e-12 {
                return x / r;
            }
        }
    }
    let n = ((dim + 1) as f64).sqrt().round() as usize;
    let basis = crate::bloch::SuBasis::new(n).expect("valid qudit dimension");
    loop {
        let mut ket: Vec<num_complex::Complex64> = (0..n)
            .map(|_| num_complex::Complex64::new(sample_gauss(rng), sample_gauss(rng)))
            .collect();
        let norm: f64 = ket.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        for c in &mut ket {
            *c /= norm;
        }
        let rho = crate::bloch::CMatrix::from_fn(n, n, |i, j| ket[i] * ket[j].conj());
        let dm = crate::bloch::DensityMatrix::new(rho).expect("pure projector is a state");
        return crate::bloch::to_bloch(&dm, &basis).expect("dim match");
    }
}

fn sample_gauss(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller; two uniforms per call keeps the stream layout simple
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Immutable set of trajectories sharing a dimension and origin.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub dim: usize,
    pub trajectories: Vec<Trajectory>,
    pub provenance: Provenance,
    pub sampler: Option<SamplerSpec>,
}

impl TrajectorySet {
    pub fn new(
        dim: usize,
        trajectories: Vec<Trajectory>,
        provenance: Provenance,
        sampler: Option<SamplerSpec>,
    ) -> Result<Self> {
        for tr in &trajectories {
            if tr.dim() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "trajectory dim {} in a set of dim {}",
                    tr.dim(),
                    dim
                )));
            }
        }
        Ok(TrajectorySet {
            dim,
            trajectories,
            provenance,
            sampler,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Largest time horizon across trajectories.
    pub fn horizon(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|t| t.t1())
            .fold(0.0, f64::max)
    }

    /// Reverses every trajectory: `t -> t_max - t`, `v -> -v`.
    pub fn time_reverse(&self) -> TrajectorySet {
        let trajectories = self
            .trajectories
            .iter()
            .map(|tr| {
                let t_max = tr.t1();
                let mut samples: Vec<Sample> = tr
                    .samples
                    .iter()
                    .rev()
                    .map(|s| Sample {
                        t: t_max - s.t,
                        x: s.x.clone(),
                        v: -&s.v,
                    })
                    .collect();
                if samples.len() == 1 {
                    samples[0].t = 0.0;
                }
                let initial_state = samples[0].x.clone();
                Trajectory {
                    samples,
                    initial_state,
                    model_label: tr.model_label.clone(),
                    meta: tr.meta,
                }
            })
            .collect();
        TrajectorySet {
            dim: self.dim,
            trajectories,
            provenance: self.provenance.clone(),
            sampler: self.sampler.clone(),
        }
    }

    /// Serializes to the trajset v1 text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# trajset v1 dim={} provenance={}",
            self.dim,
            self.provenance.label().replace(' ', "_")
        );
        for (k, tr) in self.trajectories.iter().enumerate() {
            let _ = writeln!(out, "## traj id={k}");
            for s in &tr.samples {
                let _ = write!(out, "{}", s.t);
                for v in s.x.iter() {
                    let _ = write!(out, ",{v}");
                }
                for v in s.v.iter() {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
            if k + 1 < self.trajectories.len() {
                out.push('\n');
            }
        }
        out
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrajectorySet> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<TrajectorySet> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let (dim, provenance) = parse_header(header)?;
        let mut trajectories = Vec::new();
        let mut block: Vec<Sample> = Vec::new();
        let mut block_has_v = None;
        for (idx, raw) in lines {
            let lineno = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with("## traj") {
                if !block.is_empty() {
                    trajectories.push(Trajectory::from_samples(std::mem::take(&mut block), None)?);
                    block_has_v = None;
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let has_v = match fields.len() {
                l if l == 1 + dim => false,
                l if l == 1 + 2 * dim => true,
                l => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected {} or {} fields, found {l}", 1 + dim, 1 + 2 * dim),
                    })
                }
            };
            if *block_has_v.get_or_insert(has_v) != has_v {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "mixed rows with and without derivative columns".into(),
                });
            }
            let mut nums = Vec::with_capacity(fields.len());
            for f in &fields {
                nums.push(f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    msg: format!("bad float `{f}`: {e}"),
                })?);
            }
            let x = DVector::from_vec(nums[1..1 + dim].to_vec());
            let v = if has_v {
                DVector::from_vec(nums[1 + dim..].to_vec())
            } else {
                DVector::from_element(dim, f64::NAN)
            };
            block.push(Sample { t: nums[0], x, v });
        }
        if !block.is_empty() {
            trajectories.push(Trajectory::from_samples(block, None)?);
        }
        TrajectorySet::new(dim, trajectories, provenance, None)
    }
}

fn parse_header(header: &str) -> Result<(usize, Provenance)> {
    let err = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.into(),
    };
    let rest = header
        .strip_prefix("# trajset v1 ")
        .ok_or_else(|| err("expected `# trajset v1 dim=<d> provenance=<label>`"))?;
    let mut dim = None;
    let mut prov = None;
    for tok in rest.split_whitespace() {
        if let Some(d) = tok.strip_prefix("dim=") {
            dim = Some(d.parse::<usize>().map_err(|_| err("bad dim"))?);
        } else if let Some(p) = tok.strip_prefix("provenance=") {
            prov = Some(p.to_string());
        }
    }
    let dim = dim.ok_or_else(|| err("missing dim="))?;
    let provenance = Provenance::Ingested {
        source: prov.unwrap_or_else(|| "unknown".into()),
    };
    Ok((dim, provenance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum DerivativePolicy {
    /// Use the v-columns present in the file.
    Provided,
    /// Central differences interior, one-sided at the ends.
    CentralDifference,
    /// Moving-average pre-filter (odd window) before differencing.
    SmoothedDifference { window: usize },
}

/// Loads a time-series file (trajset format, v-columns optional) and fills in
/// derivatives per `policy`.
pub fn ingest_timeseries(
    path: impl AsRef<Path>,
    policy: DerivativePolicy,
) -> Result<TrajectorySet> {
    let source = path.as_ref().display().to_string();
    let mut set = TrajectorySet::load(&path)?;
    set.provenance = Provenance::Ingested { source };
    for tr in &mut set.trajectories {
        let provided = tr.samples.iter().all(|s| s.v.iter().all(|v| v.is_finite()));
        match policy {
            DerivativePolicy::Provided => {
                if !provided {
                    return Err(Error::InvalidInput(
                        "policy `provided` but file has no derivative columns".into(),
                    ));
                }
            }
            DerivativePolicy::CentralDifference => fill_derivatives(tr, 1)?,
            DerivativePolicy::SmoothedDifference { window } => {
                if window % 2 == 0 || window == 0 {
                    return Err(Error::InvalidInput(format!(
                        "smoothing window must be odd, got {window}"
                    )));
                }
                fill_derivatives(tr, window)?;
            }
        }
    }
    Ok(set)
}

fn fill_derivatives(tr: &mut Trajectory, window: usize) -> Result<()> {
    let n = tr.samples.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "need >= 3 samples for finite-difference derivatives, got {n}"
        )));
    }
    let dim = tr.dim();
    let half = window / 2;
    // moving-average pre-filter (window 1 = identity)
    let smoothed: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let mut acc = DVector::zeros(dim);
            for s in &tr.samples[lo..=hi] {
                acc += &s.x;
            }
            acc / (hi - lo + 1) as f64
        })
        .collect();
    for i in 0..n {
        let (j0, j1) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        let dt = tr.samples[j1].t - tr.samples[j0].t;
        tr.samples[i].v = (&smoothed[j1] - &smoothed[j0]) / dt;
    }
    Ok(())
}
