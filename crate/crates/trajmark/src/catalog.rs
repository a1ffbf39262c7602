//! Reference models: five qubit examples, a time-dependent dephasing
//! counterexample, a Jaynes-Cummings qubit in a vacuum cavity, and two
//! classical 2-D flows. Each entry carries its expected verdict, default
//! horizon, and integration settings, and is the single source of truth for
//! the acceptance suite and the CLI.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bloch::{from_bloch, to_bloch, DensityMatrix, SuBasis};
use crate::detect::Verdict;
use crate::error::{Error, Result};
use crate::model::{ops, AffineGenerator, GeneratorModel, RateSchedule};
use crate::propagate::{integrate, IntegrateOpts, Sample, Trajectory};
use crate::store::{
    canonical_states, sample_initial_states, Provenance, SamplerSpec, SamplerStrategy,
    TrajectorySet,
};

pub const IDS: [&str; 10] = [
    "ex1",
    "ex2",
    "ex3",
    "ex4",
    "ex5_const",
    "ex5_ramp",
    "remark4",
    "jc_vacuum",
    "classical_spiral",
    "classical_loop",
];

/// How an entry produces trajectories.
pub enum Dynamics {
    /// Qubit master-equation model; detection runs in its own Bloch space.
    Qubit(GeneratorModel),
    /// Qubit x cavity (cavity truncated at 2 levels, exact for <= 1
    /// excitation); the qubit trajectory is recovered by partial trace.
    JaynesCummings { g: f64 },
    /// Classical planar flow given directly as an affine generator.
    Classical(AffineGenerator),
    /// Periodically driven oscillator emitted as a sampled time series
    /// (amplitude-scaled figure-eights).
    DrivenLoop,
}

pub struct CatalogEntry {
    pub id: &'static str,
    pub dynamics: Dynamics,
    pub horizon: f64,
    pub expected: Verdict,
    pub notes: &'static str,
    pub tol: f64,
    /// `h_max = horizon / h_max_divisor`.
    pub h_max_divisor: f64,
    /// States merged into every sampled set (structurally important
    /// trajectories that random sampling would miss).
    pub extra_states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CatalogOverrides {
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
    /// Scale applied to the entry's primary rate (coupling/decay strength).
    pub rate_scale: Option<f64>,
}

fn window(durations: Vec<f64>, on: usize, len: usize) -> RateSchedule {
    RateSchedule::PiecewiseConstant {
        durations,
        values: (0..len).map(|k| (k == on) as u8 as f64).collect(),
        repeat: false,
    }
}

/// Constructs a catalog entry by id.
pub fn build(id: &str, overrides: &CatalogOverrides) -> Result<CatalogEntry> {
    let s = overrides.rate_scale.unwrap_or(1.0);
    let mut entry = match id {
        "ex1" => CatalogEntry {
            id: "ex1",
            dynamics: Dynamics::Qubit(GeneratorModel::new(
                2,
                vec![],
                vec![(ops::sigma_z(), RateSchedule::Constant { value: -s })],
                "ex1",
            )?),
            horizon: 2.0,
            expected: Verdict::StrictlyMarkovian,
            notes: "time-independent dephasing with negative rate: transverse \
                    components expand, yet the flow field is constant",
            tol: 1e-10,
            h_max_divisor: 512.0,
            extra_states: vec![],
        },
        "ex2" => {
            // rotate about y, then x, then z; the final arc re-enters the
            // first at (1,0,0) with perpendicular velocity
            let d1 = std::f64::consts::FRAC_PI_2;
            let d2 = std::f64::consts::FRAC_PI_4;
            let durations = vec![d1, d2, 1e6];
            CatalogEntry {
                id: "ex2",
                dynamics: Dynamics::Qubit(GeneratorModel::new(
                    2,
                    vec![
                        (ops::sigma_y(), window(durations.clone(), 0, 3)),
                        (ops::sigma_x(), window(durations.clone(), 1, 3)),
                        (ops::sigma_z(), window(durations, 2, 3)),
                    ],
                    vec![],
                    "ex2",
                )?),
                horizon: 5.0,
                expected: Verdict::NonMarkovian,
                notes: "piecewise unitary drive whose Bloch path crosses itself",
                tol: 1e-10,
                h_max_divisor: 512.0,
                extra_states: vec![],
            }
        }
        "ex3" => CatalogEntry {
            id: "ex3",
            dynamics: Dynamics::Qubit(GeneratorModel::new(
                2,
                vec![],
                vec![
                    (
                        ops::sigma_minus(),
                        RateSchedule::PiecewiseConstant {
                            durations: vec![10.0, 10.0],
                            values: vec![s, 0.0],
                            repeat: true,
                        },
                    ),
                    (
                        ops::sigma_plus(),
                        RateSchedule::PiecewiseConstant {
                            durations: vec![10.0, 10.0],
                            values: vec![0.0, s],
                            repeat: true,
                        },
                    ),
                ],
                "ex3",
            )?),
            horizon: 60.0,
            expected: Verdict::NonMarkovian,
            notes: "alternating decay/pump baths; the z-axis state oscillates \
                    back and forth along its own path",
            tol: 1e-10,
            h_max_divisor: 512.0,
            extra_states: vec![],
        },
        "ex4" => CatalogEntry {
            id: "ex4",
            dynamics: Dynamics::Qubit(GeneratorModel::new(
                2,
                vec![],
                vec![
                    (ops::sigma_x(), RateSchedule::Constant { value: 0.5 * s }),
                    (ops::sigma_y(), RateSchedule::Constant { value: 0.5 * s }),
                    (
                        ops::sigma_z(),
                        RateSchedule::TanhScaled {
                            scale: -0.5 * s,
                            rate: 1.0,
                        },
                    ),
                ],
                "ex4",
            )?),
            horizon: 10.0,
            expected: Verdict::InitialStateMarkovian,
            notes: "eternally negative third rate; monotone contraction, no \
                    self events, but radially nested trajectories overlap",
            tol: 1e-10,
            h_max_divisor: 512.0,
            // same-ray starts whose position ranges genuinely overlap
            extra_states: vec![vec![0.6, 0.0, 0.0], vec![0.0, 0.6, 0.0]],
        },
        "ex5_const" => CatalogEntry {
            id: "ex5_const",
            dynamics: Dynamics::Qubit(ex5_model(RateSchedule::Constant { value: s })?),
            horizon: 12.0,
            expected: Verdict::StrictlyMarkovian,
            notes: "driven decay at constant rate: spiral into the focus",
            tol: 1e-10,
            h_max_divisor: 512.0,
            extra_states: vec![],
        },
        "ex5_ramp" => CatalogEntry {
            id: "ex5_ramp",
            dynamics: Dynamics::Qubit(ex5_model(RateSchedule::HoldThenRamp {
                hold: 0.35 * s,
                t_eq: 40.0,
                rate: 0.05,
                cap: 300.0,
            })?),
            horizon: 200.0,
            expected: Verdict::NonMarkovian,
            notes: "hold until equilibrated, then ramp the rate: the early \
                    spiral is cut by the adiabatic steady-state ellipse",
            tol: 1e-10,
            h_max_divisor: 2048.0,
            extra_states: vec![],
        },
        "remark4" => CatalogEntry {
            id: "remark4",
            dynamics: Dynamics::Qubit(GeneratorModel::new(
                2,
                vec![],
                vec![(
                    ops::sigma_z(),
                    RateSchedule::LinearRamp {
                        start: 0.0,
                        slope: s,
                    },
                )],
                "remark4",
            )?),
            horizon: 3.0,
            expected: Verdict::InitialStateMarkovian,
            notes: "gamma(t) = t: no trajectory self-intersects, yet states \
                    on one radial ray revisit the same positions at \
                    different speeds",
            tol: 1e-10,
            h_max_divisor: 512.0,
            extra_states: vec![vec![0.5, 0.0, 0.0], vec![0.0, 0.5, 0.0]],
        },
        "jc_vacuum" => CatalogEntry {
            id: "jc_vacuum",
            dynamics: Dynamics::JaynesCummings { g: s },
            horizon: 2.0 * std::f64::consts::PI,
            expected: Verdict::NonMarkovian,
            notes: "vacuum Rabi oscillation: every reduced-qubit trajectory \
                    retraces its own path",
            tol: 1e-12,
            h_max_divisor: 4096.0,
            extra_states: vec![],
        },
        "classical_spiral" => {
            let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
            let damp = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
            let gen = AffineGenerator::from_terms(
                2,
                vec![
                    (rot, DVector::zeros(2), RateSchedule::Constant { value: 1.0 }),
                    (
                        damp,
                        DVector::zeros(2),
                        RateSchedule::Sinusoid {
                            offset: 0.2 * s,
                            amplitude: 0.2 * s,
                            omega: 1.0,
                            phase: 0.0,
                        },
                    ),
                ],
                "classical_spiral",
            );
            CatalogEntry {
                id: "classical_spiral",
                dynamics: Dynamics::Classical(gen),
                horizon: 6.0,
                expected: Verdict::InitialStateMarkovian,
                notes: "damped rotation with breathing damping: no self \
                        events, but delayed starts cross earlier paths",
                tol: 1e-10,
                h_max_divisor: 512.0,
                // the position of the unit-circle trajectory at t = pi/2,
                // launched at t = 0: its path crosses the original
                extra_states: vec![vec![0.0, spiral_radius(std::f64::consts::FRAC_PI_2)]],
            }
        }
        "classical_loop" => CatalogEntry {
            id: "classical_loop",
            dynamics: Dynamics::DrivenLoop,
            horizon: 2.0 * std::f64::consts::PI,
            expected: Verdict::NonMarkovian,
            notes: "figure-eight driven oscillator: transversal self-crossing \
                    at the origin",
            tol: 1e-10,
            h_max_divisor: 512.0,
            extra_states: vec![],
        },
        other => {
            return Err(Error::UnknownCatalogId(other.into(), IDS.join(", ")));
        }
    };
    if let Some(h) = overrides.horizon {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {h}")));
        }
        entry.horizon = h;
    }
    if let Some(tol) = overrides.tol {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {tol}")));
        }
        entry.tol = tol;
    }
    Ok(entry)
}

fn ex5_model(gamma: RateSchedule) -> Result<GeneratorModel> {
    GeneratorModel::new(
        2,
        vec![(ops::sigma_x(), RateSchedule::Constant { value: 1.0 })],
        vec![(ops::sigma_minus(), gamma)],
        "ex5",
    )
}

/// Radius of the classical spiral launched from the unit circle, after time
/// `t` (damping `0.2 + 0.2 sin t`).
fn spiral_radius(t: f64) -> f64 {
    (-(0.2 * t + 0.2 * (1.0 - t.cos()))).exp()
}

impl CatalogEntry {
    /// Bloch/phase-space dimension of the emitted trajectories.
    pub fn dim(&self) -> usize {
        match &self.dynamics {
            Dynamics::Qubit(_) | Dynamics::JaynesCummings { .. } => 3,
            Dynamics::Classical(_) | Dynamics::DrivenLoop => 2,
        }
    }

    pub fn qubit_model(&self) -> Option<&GeneratorModel> {
        match &self.dynamics {
            Dynamics::Qubit(m) => Some(m),
            _ => None,
        }
    }

    /// Compiled generator in the detection space, when one exists (the
    /// Jaynes-Cummings reduction and the ingested loop have none).
    pub fn generator(&self) -> Result<Option<AffineGenerator>> {
        match &self.dynamics {
            Dynamics::Qubit(m) => Ok(Some(m.compile()?)),
            Dynamics::Classical(g) => Ok(Some(g.clone())),
            Dynamics::JaynesCummings { .. } | Dynamics::DrivenLoop => Ok(None),
        }
    }

    pub fn integrate_opts(&self) -> IntegrateOpts {
        IntegrateOpts {
            tol: self.tol,
            h_max: Some(self.horizon / self.h_max_divisor),
        }
    }

    /// Initial states: canonical set, plus `samples` random states, plus the
    /// entry's structural extras.
    pub fn initial_states(&self, samples: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let dim = self.dim();
        let mut states = canonical_states(dim);
        if samples > 0 {
            let strategy = if dim == 3 {
                SamplerStrategy::PureUniform
            } else {
                SamplerStrategy::BallUniform
            };
            states.extend(sample_initial_states(
                &SamplerSpec::new(strategy, samples, seed),
                dim,
            )?);
        }
        for e in &self.extra_states {
            states.push(DVector::from_vec(e.clone()));
        }
        Ok(states)
    }

    /// Builds the trajectory set for this entry.
    pub fn build_set(&self, samples: usize, seed: u64) -> Result<TrajectorySet> {
        self.build_set_from_states(&self.initial_states(samples, seed)?)
    }

    /// Like [`CatalogEntry::build_set`], but integrating exactly the given
    /// initial states (no canonical/extra-state merging). Sampled entries
    /// (`DrivenLoop`) ignore the list.
    pub fn build_set_from_states(&self, states: &[DVector<f64>]) -> Result<TrajectorySet> {
        let span = (0.0, self.horizon);
        let opts = self.integrate_opts();
        let trajectories: Vec<Trajectory> = match &self.dynamics {
            Dynamics::Qubit(m) => {
                let gen = m.compile()?;
                states
                    .iter()
                    .map(|x0| integrate(&gen, x0, span, opts))
                    .collect::<Result<_>>()?
            }
            Dynamics::Classical(gen) => states
                .iter()
                .map(|x0| integrate(gen, x0, span, opts))
                .collect::<Result<_>>()?,
            Dynamics::JaynesCummings { g } => {
                let jc = jc_composite_model(*g)?;
                let gen = jc.compile()?;
                let reduce = jc_reduction_map()?;
                let basis2 = SuBasis::new(2)?;
                let basis4 = SuBasis::new(4)?;
                states
                    .iter()
                    .map(|q0| {
                        let full0 = embed_qubit_in_vacuum(q0, &basis2, &basis4)?;
                        let full = integrate(&gen, &full0, span, opts)?;
                        reduce_trajectory(&full, &reduce)
                    })
                    .collect::<Result<_>>()?
            }
            Dynamics::DrivenLoop => driven_loop_trajectories(self.horizon)?,
        };
        TrajectorySet::new(
            self.dim(),
            trajectories,
            Provenance::ModelGenerated {
                label: self.id.into(),
            },
            None,
        )
    }
}

/// The five qubit benchmark rows for the criteria comparison table, with the
/// trajectory verdict each model is expected to receive.
pub fn table_inputs() -> Result<Vec<crate::criteria::TableInput>> {
    ["ex1", "ex2", "ex3", "ex4", "ex5_ramp"]
        .iter()
        .map(|id| {
            let e = build(id, &CatalogOverrides::default())?;
            Ok(crate::criteria::TableInput {
                id: e.id.to_string(),
                model: match e.dynamics {
                    Dynamics::Qubit(m) => m,
                    _ => unreachable!("table rows are qubit models"),
                },
                horizon: e.horizon,
                ours: e.expected,
                unphysical: e.id == "ex1",
                pair_sampler: SamplerSpec::new(SamplerStrategy::PureUniform, 10, 5),
            })
        })
        .collect()
}

/// `H = g (sigma_+ a + sigma_- a^dag)` on qubit x 2-level cavity.
pub fn jc_composite_model(g: f64) -> Result<GeneratorModel> {
    let sp = ops::sigma_plus();
    let sm = ops::sigma_minus();
    // cavity annihilator on {|0>, |1>} with vacuum as basis index 0
    let mut a = crate::bloch::CMatrix::zeros(2, 2);
    a[(0, 1)] = Complex64::new(1.0, 0.0);
    let h = sp.kronecker(&a) + sm.kronecker(&a.adjoint());
    GeneratorModel::new(
        4,
        vec![(h, RateSchedule::Constant { value: g })],
        vec![],
        "jc_vacuum",
    )
}

/// Linear map from composite (dim 15) to reduced-qubit (dim 3) Bloch
/// coordinates: `P[j,i] = Tr(Sigma_i (sigma_j x I)) / 4`.
pub fn jc_reduction_map() -> Result<DMatrix<f64>> {
    let basis2 = SuBasis::new(2)?;
    let basis4 = SuBasis::new(4)?;
    let eye = crate::bloch::CMatrix::identity(2, 2);
    let mut p = DMatrix::zeros(3, 15);
    for (j, sj) in basis2.elements.iter().enumerate() {
        let lifted = sj.kronecker(&eye);
        for (i, si) in basis4.elements.iter().enumerate() {
            p[(j, i)] = (si * &lifted).trace().re / 4.0;
        }
    }
    Ok(p)
}

fn embed_qubit_in_vacuum(
    q: &DVector<f64>,
    basis2: &SuBasis,
    basis4: &SuBasis,
) -> Result<DVector<f64>> {
    let rho_q = from_bloch(q, basis2)?;
    let vac = DensityMatrix::basis_state(2, 0);
    let full = rho_q.entries.kronecker(&vac.entries);
    to_bloch(&DensityMatrix::new(full)?, basis4)
}

fn reduce_trajectory(full: &Trajectory, p: &DMatrix<f64>) -> Result<Trajectory> {
    let samples = full
        .samples
        .iter()
        .map(|s| Sample {
            t: s.t,
            x: p * &s.x,
            v: p * &s.v,
        })
        .collect();
    let mut tr = Trajectory::from_samples(samples, full.model_label.clone())?;
    tr.meta = full.meta;
    Ok(tr)
}

/// Figure-eight series `(A sin 2t, A sin t)` at two amplitudes, sampled at
/// `dt = 2e-3` with exact derivatives attached.
fn driven_loop_trajectories(horizon: f64) -> Result<Vec<Trajectory>> {
    let dt = 2e-3;
    let n = (horizon / dt).round() as usize;
    [1.0f64, 0.75]
        .iter()
        .map(|&amp| {
            let samples = (0..=n)
                .map(|k| {
                    let t = k as f64 * dt;
                    Sample {
                        t,
                        x: DVector::from_vec(vec![amp * (2.0 * t).sin(), amp * t.sin()]),
                        v: DVector::from_vec(vec![
                            2.0 * amp * (2.0 * t).cos(),
                            amp * t.cos(),
                        ]),
                    }
                })
                .collect();
            Trajectory::from_samples(samples, Some("classical_loop".into()))
        })
        .collect()
}

/// Verify the reduced Jaynes-Cummings state against the vacuum-Rabi closed
/// form; returns the max deviation (used by tests and examples).
pub fn jc_closed_form(q0: &DVector<f64>, g: f64, t: f64) -> DVector<f64> {
    // alpha = excited amplitude: |alpha|^2 = (1+z)/2; transverse pattern
    // scales with cos(gt), population with cos^2(gt)
    let c = (g * t).cos();
    let alpha2 = (1.0 + q0[2]) / 2.0;
    DVector::from_vec(vec![q0[0] * c, q0[1] * c, 2.0 * alpha2 * c * c - 1.0])
}
