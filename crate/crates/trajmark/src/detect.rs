//! Self-/cross-intersection detection and the SM/IM/NM classifier.
//!
//! A process is Non-Markovian when some trajectory returns to a previous
//! position with a distinct velocity; it is Strictly Markovian when the
//! velocity field is single-valued (equivalently, the generator is
//! time-independent); everything in between is Initial-state Markovian.
//!
//! Detection pipeline per trajectory (or trajectory pair):
//!
//! 1. **Candidates** — segments are hashed on a uniform spatial grid (cell
//!    size `max(4 eps_pos, median segment length)`, PCA projection to 3-D for
//!    higher-dimensional sets); pairs sharing a cell neighborhood and
//!    separated by at least `tau_min` local steps are kept.
//! 2. **Minimization** — inter-segment distance over the two cubic-Hermite
//!    parameters by alternating golden-section search (parameter tolerance
//!    1e-12), with a cheap chord-distance prefilter.
//! 3. **Acceptance** — residual within the capture band, both local speeds
//!    above the stationary-point floor, and velocities distinct in direction
//!    or magnitude (equal position *and* equal velocity does not count).
//! 4. **Strict-crossing filter** — transversal candidates must straddle (the
//!    signed side test changes sign); one-sided approaches become near
//!    misses.
//! 5. **Refinement** — both branches are re-integrated locally at `tol/100`
//!    when a generator is available; an event is accepted only if the refined
//!    residual collapses to the acceptance floor (`1e-10 * R`), otherwise it
//!    is demoted to a near miss. This separates true crossings from
//!    asymptotic approaches such as nested spiral turns.
//! 6. **Clustering** — events adjacent in `(t1, t2)` merge; an extended
//!    overlap traversed with reversed velocity reports once as a retrace.

use std::collections::{HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochVector;
use crate::error::{Error, Result};
use crate::model::AffineGenerator;
use crate::propagate::{integrate, IntegrateOpts, Sample, Trajectory, DEFAULT_TOL};
use crate::store::TrajectorySet;

/// Default position tolerance relative to the set diameter.
pub const DEFAULT_EPS_POS_REL: f64 = 1e-6;
/// Default stationary-point speed floor relative to the set diameter.
pub const DEFAULT_EPS_SPEED_REL: f64 = 1e-8;
/// Residual at or below this (times the set diameter) counts as an exact
/// recurrence under `strict_crossing`.
pub const ACCEPT_FLOOR_REL: f64 = 1e-10;
/// Residuals up to this (times the set diameter) are tracked as near misses.
pub const NEAR_CAPTURE_REL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Absolute position tolerance; `None` means `1e-6 * R` where `R` is the
    /// bounding-box diagonal of the analyzed set.
    pub eps_pos: Option<f64>,
    /// Velocity-direction tolerance in radians.
    pub eps_angle: f64,
    /// Relative speed-difference tolerance.
    pub eps_relmag: f64,
    /// Stationary-point speed floor; `None` means `1e-8 * R`.
    pub eps_speed: Option<f64>,
    /// Minimum temporal separation of a self event, in local steps.
    pub tau_min_steps: usize,
    /// Demote one-sided/asymptotic approaches to near misses.
    pub strict_crossing: bool,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            eps_pos: None,
            eps_angle: 1e-2,
            eps_relmag: 1e-3,
            eps_speed: None,
            tau_min_steps: 10,
            strict_crossing: true,
        }
    }
}

/// `DetectionParams` with scale-relative defaults resolved against a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub eps_pos: f64,
    pub eps_angle: f64,
    pub eps_relmag: f64,
    pub eps_speed: f64,
    pub tau_min_steps: usize,
    pub strict_crossing: bool,
    pub accept_floor: f64,
    pub near_capture: f64,
    /// The bounding-box diagonal the relative defaults were scaled by.
    pub scale: f64,
}

impl DetectionParams {
    pub fn resolve(&self, scale: f64) -> Result<ResolvedParams> {
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let eps_pos = self.eps_pos.unwrap_or(DEFAULT_EPS_POS_REL * scale);
        let eps_speed = self.eps_speed.unwrap_or(DEFAULT_EPS_SPEED_REL * scale);
        for (name, v) in [
            ("eps_pos", eps_pos),
            ("eps_angle", self.eps_angle),
            ("eps_relmag", self.eps_relmag),
            ("eps_speed", eps_speed),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(ResolvedParams {
            eps_pos,
            eps_angle: self.eps_angle,
            eps_relmag: self.eps_relmag,
            eps_speed,
            tau_min_steps: self.tau_min_steps,
            strict_crossing: self.strict_crossing,
            accept_floor: (ACCEPT_FLOOR_REL * scale).max(f64::MIN_POSITIVE),
            near_capture: (NEAR_CAPTURE_REL * scale).max(eps_pos),
            scale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// Transversal self/cross intersection.
    Crossing,
    /// Extended overlap traversed with reversed velocity.
    Retrace,
    /// Tangential rejoin: same direction, different speed.
    LoopClosure,
    /// Close approach that does not collapse to an exact recurrence.
    NearMiss,
}

impl EventKind {
    pub fn accepted(self) -> bool {
        self != EventKind::NearMiss
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntersectionEvent {
    pub t1: f64,
    pub t2: f64,
    pub x1: BlochVector,
    pub x2: BlochVector,
    pub v1: BlochVector,
    pub v2: BlochVector,
    /// `|x1 - x2|` after refinement.
    pub residual: f64,
    pub velocity_angle: f64,
    pub velocity_relmag: f64,
    pub kind: EventKind,
}

/// Local re-integration context for the refinement pass.
pub struct Refiner<'a> {
    pub gen: &'a AffineGenerator,
    pub tol: f64,
}

// ---------------------------------------------------------------------------
// geometry helpers

#[derive(Clone, Copy)]
struct SegRef<'a> {
    a: &'a Sample,
    b: &'a Sample,
}

impl SegRef<'_> {
    fn h(&self) -> f64 {
        self.b.t - self.a.t
    }

    fn time(&self, s: f64) -> f64 {
        self.a.t + s * self.h()
    }

    fn pos(&self, s: f64) -> DVector<f64> {
        let h = self.h();
        let (s2, s3) = (s * s, s * s * s);
        &self.a.x * (2.0 * s3 - 3.0 * s2 + 1.0)
            + &self.a.v * ((s3 - 2.0 * s2 + s) * h)
            + &self.b.x * (-2.0 * s3 + 3.0 * s2)
            + &self.b.v * ((s3 - s2) * h)
    }

    fn vel(&self, s: f64) -> DVector<f64> {
        let h = self.h();
        let s2 = s * s;
        &self.a.x * ((6.0 * s2 - 6.0 * s) / h)
            + &self.a.v * (3.0 * s2 - 4.0 * s + 1.0)
            + &self.b.x * ((-6.0 * s2 + 6.0 * s) / h)
            + &self.b.v * (3.0 * s2 - 2.0 * s)
    }
}

fn golden_min(f: &dyn Fn(f64) -> f64, tol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Monomial coefficients of one Hermite segment, extracted once so the inner
/// minimization loop evaluates positions without allocating.
struct SegPoly {
    c: [DVector<f64>; 4],
}

impl SegPoly {
    fn new(seg: SegRef) -> Self {
        let h = seg.h();
        let c0 = seg.a.x.clone();
        let c1 = &seg.a.v * h;
        let c2 = (&seg.b.x - &seg.a.x) * 3.0 - &seg.a.v * (2.0 * h) - &seg.b.v * h;
        let c3 = (&seg.a.x - &seg.b.x) * 2.0 + (&seg.a.v + &seg.b.v) * h;
        Self { c: [c0, c1, c2, c3] }
    }

    #[inline]
    fn coord(&self, k: usize, s: f64) -> f64 {
        ((self.c[3][k] * s + self.c[2][k]) * s + self.c[1][k]) * s + self.c[0][k]
    }
}

/// Minimum distance between two Hermite segments by alternating 1-D
/// golden-section refinement; returns `(s, u, distance)`.
fn min_seg_pair(sa: SegRef, sb: SegRef, param_tol: f64) -> (f64, f64, f64) {
    let pa = SegPoly::new(sa);
    let pb = SegPoly::new(sb);
    let dim = sa.a.x.len();
    let d2 = |s: f64, u: f64| {
        let mut acc = 0.0;
        for k in 0..dim {
            let d = pa.coord(k, s) - pb.coord(k, u);
            acc += d * d;
        }
        acc
    };
    let (mut s, mut u) = (0.5, 0.5);
    for _ in 0..48 {
        let s_new = golden_min(&|t| d2(t, u), param_tol);
        let u_new = golden_min(&|t| d2(s_new, t), param_tol);
        let moved = (s_new - s).abs().max((u_new - u).abs());
        s = s_new;
        u = u_new;
        if moved < param_tol {
            break;
        }
    }
    (s, u, d2(s, u).sqrt())
}

/// Upper bound on how far a Hermite segment bows away from its chord,
/// sampled at three interior points with a safety factor.
fn sagitta(seg: SegRef) -> f64 {
    let mut worst = 0.0f64;
    for &s in &[0.25, 0.5, 0.75] {
        let chord_pt = &seg.a.x * (1.0 - s) + &seg.b.x * s;
        worst = worst.max((seg.pos(s) - chord_pt).norm());
    }
    1.5 * worst
}

/// One closest-approach neighbourhood in the `(t1, t2)` plane.
struct Cover {
    t1: f64,
    t2: f64,
    best: f64,
    settled: bool,
    /// Minimizer invocations charged to this neighbourhood.
    tries: u32,
}

/// Covers indexed by a uniform grid over `(t1, t2)` so that membership tests
/// stay O(1) even when an overlapping pair spawns thousands of windows.
struct CoverMap {
    window: f64,
    covers: Vec<Cover>,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl CoverMap {
    fn new(window: f64) -> Self {
        Self {
            window,
            covers: Vec::new(),
            cells: HashMap::new(),
        }
    }

    fn key(&self, t1: f64, t2: f64) -> (i64, i64) {
        (
            (t1 / self.window).floor() as i64,
            (t2 / self.window).floor() as i64,
        )
    }

    /// Most recently created cover whose anchor is within one window of
    /// `(t1, t2)`, if any.
    fn find(&self, t1: f64, t2: f64) -> Option<usize> {
        let (kx, ky) = self.key(t1, t2);
        let mut hit: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.cells.get(&(kx + dx, ky + dy)) {
                    for &idx in list {
                        let c = &self.covers[idx as usize];
                        if (t1 - c.t1).abs() <= self.window && (t2 - c.t2).abs() <= self.window {
                            hit = Some(hit.map_or(idx as usize, |h| h.max(idx as usize)));
                        }
                    }
                }
            }
        }
        hit
    }

    /// Move cover `k`'s anchor, re-registering it if it crossed a cell line.
    fn slide(&mut self, k: usize, t1: f64, t2: f64) {
        let old = self.key(self.covers[k].t1, self.covers[k].t2);
        let new = self.key(t1, t2);
        self.covers[k].t1 = t1;
        self.covers[k].t2 = t2;
        if new != old {
            let list = self.cells.entry(new).or_default();
            if !list.contains(&(k as u32)) {
                list.push(k as u32);
            }
        }
    }

    /// Fold an observed closest approach into the matching cover, creating a
    /// new one when nothing nearby exists.
    fn record(&mut self, t1: f64, t2: f64, res: f64, settled: bool) {
        match self.find(t1, t2) {
            Some(k) => {
                self.covers[k].best = self.covers[k].best.min(res);
                self.covers[k].settled |= settled;
                self.slide(k, t1, t2);
            }
            None => {
                let idx = self.covers.len() as u32;
                self.covers.push(Cover {
                    t1,
                    t2,
                    best: res,
                    settled,
                    tries: 0,
                });
                self.cells.entry(self.key(t1, t2)).or_default().push(idx);
            }
        }
    }
}

/// Closest distance between the two chords (cheap prefilter).
fn chord_distance(sa: SegRef, sb: SegRef) -> f64 {
    let r = &sa.a.x - &sb.a.x; // p1 - p2
    let e1 = &sa.b.x - &sa.a.x;
    let e2 = &sb.b.x - &sb.a.x;
    let a = e1.norm_squared();
    let e = e2.norm_squared();
    let f = e2.dot(&r);
    let (s, t);
    if a <= 1e-30 && e <= 1e-30 {
        return r.norm();
    }
    if a <= 1e-30 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = e1.dot(&r);
        if e <= 1e-30 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = e1.dot(&e2);
            let denom = a * e - b * b;
            let s0 = if denom > 1e-30 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t0 = ((b * s0 + f) / e).clamp(0.0, 1.0);
            let s1 = ((b * t0 - c) / a).clamp(0.0, 1.0);
            s = s1;
            t = t0;
        }
    }
    ((&sa.a.x + &e1 * s) - (&sb.a.x + &e2 * t)).norm()
}

fn angle_between(v1: &DVector<f64>, v2: &DVector<f64>) -> f64 {
    let n1 = v1.norm();
    let n2 = v2.norm();
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (v1.dot(v2) / (n1 * n2)).clamp(-1.0, 1.0).acos()
}

// ---------------------------------------------------------------------------
// spatial hashing

struct SpatialIndex {
    cell: f64,
    /// 3 x d projection for d > 3 (top principal axes), identity otherwise.
    proj: Option<DMatrix<f64>>,
    map: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl SpatialIndex {
    fn project(&self, x: &DVector<f64>) -> [f64; 3] {
        match &self.proj {
            Some(p) => {
                let y = p * x;
                [y[0], y[1], y[2]]
            }
            None => {
                let mut out = [0.0; 3];
                for k in 0..x.len().min(3) {
                    out[k] = x[k];
                }
                out
            }
        }
    }

    fn key(&self, p: [f64; 3]) -> (i64, i64, i64) {
        (
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
            (p[2] / self.cell).floor() as i64,
        )
    }

    fn build(traj: &Trajectory, cell: f64, proj: Option<DMatrix<f64>>) -> SpatialIndex {
        let mut idx = SpatialIndex {
            cell,
            proj,
            map: HashMap::new(),
        };
        for i in 0..traj.samples.len().saturating_sub(1) {
            let (a, b) = (&traj.samples[i], &traj.samples[i + 1]);
            let mid = (&a.x + &b.x) * 0.5;
            let mut keys = [
                idx.key(idx.project(&a.x)),
                idx.key(idx.project(&mid)),
                idx.key(idx.project(&b.x)),
            ];
            keys.sort_unstable();
            let mut prev = None;
            for k in keys {
                if Some(k) != prev {
                    idx.map.entry(k).or_default().push(i as u32);
                    prev = Some(k);
                }
            }
        }
        idx
    }

    /// Segment indices in the 27-cell neighborhoods of a segment's key cells.
    fn query(&self, a: &Sample, b: &Sample, out: &mut HashSet<u32>) {
        out.clear();
        let mid = (&a.x + &b.x) * 0.5;
        for p in [
            self.project(&a.x),
            self.project(&mid),
            self.project(&b.x),
        ] {
            let (kx, ky, kz) = self.key(p);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(v) = self.map.get(&(kx + dx, ky + dy, kz + dz)) {
                            out.extend(v.iter().copied());
                        }
                    }
                }
            }
        }
    }
}

/// Top-3 principal axes of the sample cloud, for hashing sets with d > 3.
fn pca_projection(sets: &[&Trajectory], dim: usize) -> Option<DMatrix<f64>> {
    if dim <= 3 {
        return None;
    }
    let mut mean = DVector::zeros(dim);
    let mut count = 0usize;
    for tr in sets {
        for s in &tr.samples {
            mean += &s.x;
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    mean /= count as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for tr in sets {
        for s in &tr.samples {
            let d = &s.x - &mean;
            cov += &d * d.transpose();
        }
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let mut proj = DMatrix::zeros(3, dim);
    for (row, &col) in order.iter().take(3).enumerate() {
        proj.row_mut(row).copy_from(&eig.eigenvectors.column(col).transpose());
    }
    Some(proj)
}

fn median_segment_length(trajs: &[&Trajectory]) -> f64 {
    let mut lens: Vec<f64> = trajs
        .iter()
        .flat_map(|tr| {
            tr.samples
                .windows(2)
                .map(|w| (&w[1].x - &w[0].x).norm())
                .filter(|&l| l > 0.0)
        })
        .collect();
    if lens.is_empty() {
        return 0.0;
    }
    lens.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lens[lens.len() / 2]
}

fn set_scale(trajs: &[&Trajectory]) -> f64 {
    let dim = trajs.first().map(|t| t.dim()).unwrap_or(0);
    let mut lo = DVector::from_element(dim, f64::INFINITY);
    let mut hi = DVector::from_element(dim, f64::NEG_INFINITY);
    for tr in trajs {
        let (l, h) = tr.bounding_box();
        for k in 0..dim {
            lo[k] = lo[k].min(l[k]);
            hi[k] = hi[k].max(h[k]);
        }
    }
    let mut d2 = 0.0;
    for k in 0..dim {
        let w = hi[k] - lo[k];
        if w.is_finite() {
            d2 += w * w;
        }
    }
    d2.sqrt()
}

// ---------------------------------------------------------------------------
// event pipeline

struct DetectCtx<'a> {
    rp: ResolvedParams,
    cell: f64,
    proj: Option<DMatrix<f64>>,
    refiner: Option<&'a Refiner<'a>>,
}

impl DetectCtx<'_> {
    fn events_for_pair(
        &self,
        ta: &Trajectory,
        tb: &Trajectory,
        self_mode: bool,
    ) -> Vec<IntersectionEvent> {
        if ta.samples.len() < 2 || tb.samples.len() < 2 {
            return Vec::new();
        }
        let index = SpatialIndex::build(ta, self.cell, self.proj.clone());
        let window = 2.0
            * self.rp.tau_min_steps.max(1) as f64
            * ta.median_dt().max(tb.median_dt()).max(f64::MIN_POSITIVE);
        let conclusive = self.rp.eps_pos.max(self.rp.accept_floor);
        let mut raw: Vec<Candidate> = Vec::new();
        // Per-(t1, t2)-window bookkeeping of the closest approach found so
        // far. Trajectories that *overlap* along a shared attractor produce a
        // continuum of coincidences — a quadratic number of candidate pairs —
        // so inside an already-visited window a pair is only minimized when a
        // cheap chord bound says it could beat the window's best approach.
        let mut covered = CoverMap::new(window);
        let seg_sags = |tr: &Trajectory| -> Vec<f64> {
            (0..tr.samples.len() - 1)
                .map(|i| {
                    sagitta(SegRef {
                        a: &tr.samples[i],
                        b: &tr.samples[i + 1],
                    })
                })
                .collect()
        };
        let sag_a = seg_sags(ta);
        let sag_b = if std::ptr::eq(ta, tb) {
            sag_a.clone()
        } else {
            seg_sags(tb)
        };
        let mut bucket = HashSet::new();
        let mb = tb.samples.len() - 1;
        for j in 0..mb {
            let (a, b) = (&tb.samples[j], &tb.samples[j + 1]);
            index.query(a, b, &mut bucket);
            let mut cands: Vec<u32> = bucket.iter().copied().collect();
            cands.sort_unstable();
            for i in cands {
                let i = i as usize;
                if self_mode && j < i + self.rp.tau_min_steps.max(1) {
                    continue;
                }
                let (ti, tj) = (ta.samples[i].t, tb.samples[j].t);
                let margin = sag_a[i] + sag_b[j];
                if let Some(k) = covered.find(ti, tj) {
                    if covered.covers[k].settled {
                        // slide the anchor so a continuous overlap stays one
                        // window instead of spawning a fresh one every few
                        // segments
                        covered.slide(k, ti, tj);
                        continue;
                    }
                    let sa = SegRef {
                        a: &ta.samples[i],
                        b: &ta.samples[i + 1],
                    };
                    let sb = SegRef {
                        a: &tb.samples[j],
                        b: &tb.samples[j + 1],
                    };
                    let chord = chord_distance(sa, sb);
                    if chord - margin > 0.5 * covered.covers[k].best {
                        covered.slide(k, ti, tj);
                        continue;
                    }
                    // a neighbourhood that keeps near-missing gets a bounded
                    // minimizer budget; only a chord dip toward a genuine
                    // coincidence reopens it
                    if covered.covers[k].tries >= 40 && chord - margin > 50.0 * conclusive {
                        covered.slide(k, ti, tj);
                        continue;
                    }
                    covered.covers[k].tries += 1;
                }
                match self.analyze(ta, i, tb, j, self_mode, margin) {
                    Outcome::Skip => {}
                    Outcome::NonEvent { t1, t2, dist } => {
                        // a converged coincidence with no event content still
                        // resolves its neighbourhood
                        covered.record(t1, t2, dist, dist <= conclusive);
                    }
                    Outcome::Hit(cand) => {
                        let (t1, t2) = (cand.ev.t1, cand.ev.t2);
                        let res = cand.ev.residual;
                        let settled = res <= conclusive && cand.ev.kind.accepted();
                        covered.record(t1, t2, res, settled);
                        raw.push(cand);
                    }
                }
            }
        }
        cluster_candidates(raw, window)
            .into_iter()
            .map(|c| self.finalize(ta, tb, c))
            .collect()
    }

    /// Final acceptance decision for one cluster representative: refine by
    /// local re-integration when a generator is attached, then demote to a
    /// near miss unless the residual sits at the acceptance threshold.
    fn finalize(&self, ta: &Trajectory, tb: &Trajectory, c: Candidate) -> IntersectionEvent {
        let rp = &self.rp;
        let mut ev = c.ev;
        if ev.kind != EventKind::NearMiss {
            if ev.residual <= rp.eps_pos.max(rp.accept_floor) * 50.0 {
                if let Some(refiner) = self.refiner {
                    if let Some(d) = self.refine_pair(ta, c.i, tb, c.j, refiner) {
                        ev.residual = ev.residual.min(d);
                    }
                }
            }
            let accept_at = if rp.strict_crossing {
                rp.accept_floor
            } else {
                rp.eps_pos
            };
            if ev.residual > accept_at {
                ev.kind = EventKind::NearMiss;
            }
            // An asymptotic approach toward a attracting set can dip below the
            // acceptance floor without the curve ever revisiting itself. A
            // genuine retrace mirrors the whole neighbourhood, so the offset
            // transverse to the motion stays at integration noise across the
            // coincidence window; a mere approach leaves a systematic
            // transverse gap orders of magnitude above it.
            if ev.kind == EventKind::Retrace
                && std::ptr::eq(ta, tb)
                && !self.retrace_window_confirmed(ta, &ev)
            {
                ev.kind = EventKind::NearMiss;
            }
        }
        ev
    }

    /// Check that time-mirrored pairs around a tentative self-retrace stay
    /// transversally coincident at noise level over an extended window.
    fn retrace_window_confirmed(&self, ta: &Trajectory, ev: &IntersectionEvent) -> bool {
        let ceiling = 1e-3 * self.rp.accept_floor;
        let step = ((ev.t2 - ev.t1) / 8.0).max(4.0 * ta.median_dt());
        for k in 1..=12 {
            let d = k as f64 * step;
            let (u1, u2) = (ev.t1 + d, ev.t2 - d);
            // skip rather than clamp: clamping would break the time-mirror
            // pairing for a closure spanning the whole record
            if u1 > ta.t1() || u2 < ta.t0() {
                continue;
            }
            let (Ok((a, va)), Ok((b, _))) = (ta.dense_eval(u1), ta.dense_eval(u2)) else {
                continue;
            };
            let diff = &a - &b;
            let n = va.norm();
            let perp = if n > 0.0 {
                let vh = va / n;
                let along = diff.dot(&vh);
                (diff - vh * along).norm()
            } else {
                diff.norm()
            };
            if perp > ceiling {
                return false;
            }
        }
        true
    }

    fn analyze(
        &self,
        ta: &Trajectory,
        i: usize,
        tb: &Trajectory,
        j: usize,
        self_mode: bool,
        margin: f64,
    ) -> Outcome {
        let rp = &self.rp;
        let sa = SegRef {
            a: &ta.samples[i],
            b: &ta.samples[i + 1],
        };
        let sb = SegRef {
            a: &tb.samples[j],
            b: &tb.samples[j + 1],
        };
        // cheap chord prefilter with a sagitta allowance for curvature
        let la = (&sa.b.x - &sa.a.x).norm();
        let lb = (&sb.b.x - &sb.a.x).norm();
        if chord_distance(sa, sb) > rp.near_capture + margin {
            return Outcome::Skip;
        }
        // a segment parked on a fixed point can never host an event (the
        // stationary-point floor would reject it) but would otherwise flood
        // the minimizer with zero-distance pairs
        let stationary = |seg: SegRef, len: f64| {
            len <= rp.eps_speed * seg.h()
                && seg.a.v.norm() <= rp.eps_speed
                && seg.b.v.norm() <= rp.eps_speed
        };
        if stationary(sa, la) || stationary(sb, lb) {
            return Outcome::Skip;
        }
        // coarse minimization first; go to full precision only when close
        let (s0, u0, d0) = min_seg_pair(sa, sb, 1e-4);
        if d0 > 2.0 * rp.near_capture {
            return Outcome::Skip;
        }
        let (s, u, dist) = min_seg_pair(sa, sb, 1e-12);
        let _ = (s0, u0);
        if dist > rp.near_capture {
            return Outcome::Skip;
        }
        let (t1, t2) = (sa.time(s), sb.time(u));
        let non_event = Outcome::NonEvent { t1, t2, dist };
        if self_mode {
            // the index-gap prefilter can be defeated by locally tiny steps
            // (e.g. near a schedule breakpoint), so also require a genuine
            // temporal separation: two points an instant apart on one smooth
            // branch always coincide in the limit and carry no evidence
            let tau_time = self.rp.tau_min_steps.max(1) as f64 * ta.median_dt();
            if t2 - t1 < tau_time {
                return non_event;
            }
        }
        let x1 = sa.pos(s);
        let x2 = sb.pos(u);
        let v1 = sa.vel(s);
        let v2 = sb.vel(u);
        let (n1, n2) = (v1.norm(), v2.norm());
        if n1 < rp.eps_speed || n2 < rp.eps_speed {
            return non_event; // stationary-point exclusion
        }
        let velocity_angle = angle_between(&v1, &v2);
        let velocity_relmag = (n1 - n2).abs() / n1.max(n2);
        let distinct = velocity_angle > rp.eps_angle || velocity_relmag > rp.eps_relmag;
        if !distinct {
            return non_event; // equal position and velocity does not count
        }
        let mut kind = if velocity_angle > std::f64::consts::PI - 0.3 {
            EventKind::Retrace
        } else if velocity_angle > rp.eps_angle {
            EventKind::Crossing
        } else {
            EventKind::LoopClosure
        };
        // strict-crossing side test: for a transversal crossing the other
        // segment's endpoints straddle this segment's tangent line
        if rp.strict_crossing && kind == EventKind::Crossing && !straddles(sa, sb, &x1) {
            kind = EventKind::NearMiss;
        }
        // Two curves tracking the same solution produce sliding tangential
        // matches at slightly offset times, where the speed difference is a
        // sampling artifact, not evidence. A genuine tangential coincidence
        // has the partner elsewhere at equal clock time.
        if !self_mode && kind == EventKind::LoopClosure {
            if let Ok((xb, vb)) = tb.dense_eval(t1) {
                let same_pos = (&xb - &x1).norm() <= rp.near_capture;
                let same_vel =
                    (&vb - &v1).norm() <= rp.eps_relmag * n1.max(vb.norm()) + rp.eps_speed;
                if same_pos && same_vel {
                    return non_event;
                }
            }
        }
        Outcome::Hit(Candidate {
            ev: IntersectionEvent {
                t1,
                t2,
                x1,
                x2,
                v1,
                v2,
                residual: dist,
                velocity_angle,
                velocity_relmag,
                kind,
            },
            i,
            j,
        })
    }

    /// Re-integrates both branches locally at `tol/100` and returns the
    /// minimized distance between the refined snippets.
    fn refine_pair(
        &self,
        ta: &Trajectory,
        i: usize,
        tb: &Trajectory,
        j: usize,
        refiner: &Refiner,
    ) -> Option<f64> {
        let snip_a = refine_snippet(ta, i, refiner)?;
        let snip_b = refine_snippet(tb, j, refiner)?;
        // coarse closest sample pair, then golden-section on the surrounding
        // segment pairs
        let (mut bi, mut bj, mut best) = (0usize, 0usize, f64::INFINITY);
        for (ia, sa) in snip_a.samples.iter().enumerate() {
            for (ib, sb) in snip_b.samples.iter().enumerate() {
                let d = (&sa.x - &sb.x).norm();
                if d < best {
                    best = d;
                    bi = ia;
                    bj = ib;
                }
            }
        }
        let mut min_dist = best;
        let na = snip_a.samples.len() - 1;
        let nb = snip_b.samples.len() - 1;
        for ia in bi.saturating_sub(1)..=(bi + 1).min(na.saturating_sub(1)) {
            for ib in bj.saturating_sub(1)..=(bj + 1).min(nb.saturating_sub(1)) {
                let sa = SegRef {
                    a: &snip_a.samples[ia],
                    b: &snip_a.samples[ia + 1],
                };
                let sb = SegRef {
                    a: &snip_b.samples[ib],
                    b: &snip_b.samples[ib + 1],
                };
                let (_, _, d) = min_seg_pair(sa, sb, 1e-12);
                min_dist = min_dist.min(d);
            }
        }
        Some(min_dist)
    }
}

/// Re-integrate a short window around segment `i` from a stored sample.
fn refine_snippet(traj: &Trajectory, i: usize, refiner: &Refiner) -> Option<Trajectory> {
    let n = traj.samples.len();
    if n < 2 {
        return None;
    }
    let lo = i.saturating_sub(2);
    let hi = (i + 3).min(n - 1);
    let start = &traj.samples[lo];
    let span = traj.samples[hi].t - start.t;
    if span <= 0.0 {
        return None;
    }
    integrate(
        refiner.gen,
        &start.x,
        (start.t, start.t + span),
        IntegrateOpts {
            tol: (refiner.tol / 100.0).max(1e-14),
            h_max: Some(span / 16.0),
        },
    )
    .ok()
}

/// Side test: endpoints of `sb` straddle the tangent line of `sa` at the
/// closest point (within the 2-plane spanned by the chords). Degenerate
/// near-parallel configurations pass by default.
fn straddles(sa: SegRef, sb: SegRef, at: &DVector<f64>) -> bool {
    let ca = &sa.b.x - &sa.a.x;
    let cb = &sb.b.x - &sb.a.x;
    let na = ca.norm();
    if na < 1e-30 {
        return true;
    }
    let e1 = ca / na;
    let nvec = &cb - &e1 * cb.dot(&e1);
    let nn = nvec.norm();
    if nn < 1e-9 * cb.norm().max(1e-300) {
        return true; // near-parallel: the side test is meaningless
    }
    let nhat = nvec / nn;
    let s0 = (&sb.a.x - at).dot(&nhat);
    let s1 = (&sb.b.x - at).dot(&nhat);
    s0 * s1 <= 0.0
}

/// A pre-acceptance event plus the segment indices it came from (needed for
/// the deferred refinement pass).
struct Candidate {
    ev: IntersectionEvent,
    i: usize,
    j: usize,
}

/// What `analyze` learned about one segment pair. `NonEvent` means the
/// minimizer converged to a coincidence that fails an exclusion rule
/// (coincident velocities, stationary point, too small a time gap); the
/// location is still reported so the caller can mark the neighbourhood as
/// resolved instead of re-minimizing every overlapping pair in it.
enum Outcome {
    Skip,
    NonEvent { t1: f64, t2: f64, dist: f64 },
    Hit(Candidate),
}

/// Chain-cluster candidates whose `(t1, t2)` pairs sit within `window` of a
/// cluster member, keeping the best representative (non-near-miss preferred,
/// then smallest residual). One geometric coincidence otherwise surfaces as
/// many neighboring segment-pair minima.
fn cluster_candidates(mut cands: Vec<Candidate>, window: f64) -> Vec<Candidate> {
    cands.sort_by(|a, b| (a.ev.t1, a.ev.t2).partial_cmp(&(b.ev.t1, b.ev.t2)).unwrap());
    struct Cluster {
        last_t1: f64,
        last_t2: f64,
        rep: Candidate,
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for c in cands {
        let (t1, t2) = (c.ev.t1, c.ev.t2);
        let (acc, res) = (c.ev.kind.accepted(), c.ev.residual);
        let home = clusters
            .iter()
            .rposition(|cl| (t1 - cl.last_t1).abs() <= window && (t2 - cl.last_t2).abs() <= window);
        match home {
            Some(k) => {
                let cl = &mut clusters[k];
                cl.last_t1 = t1;
                cl.last_t2 = t2;
                let better = (acc && !cl.rep.ev.kind.accepted())
                    || (acc == cl.rep.ev.kind.accepted() && res < cl.rep.ev.residual);
                if better {
                    cl.rep = c;
                }
            }
            None => clusters.push(Cluster {
                last_t1: t1,
                last_t2: t2,
                rep: c,
            }),
        }
    }
    let mut out: Vec<Candidate> = clusters.into_iter().map(|c| c.rep).collect();
    out.sort_by(|a, b| (a.ev.t1, a.ev.t2).partial_cmp(&(b.ev.t1, b.ev.t2)).unwrap());
    out
}

// ---------------------------------------------------------------------------
// public detection entry points

/// Self-intersection events of a single trajectory. Scale-relative defaults
/// resolve against the trajectory's own bounding box.
pub fn find_self_intersections(
    traj: &Trajectory,
    params: &DetectionParams,
    refiner: Option<&Refiner>,
) -> Result<Vec<IntersectionEvent>> {
    let trajs = [traj];
    let rp = params.resolve(set_scale(&trajs))?;
    let cell = detection_cell(&trajs, &rp);
    let ctx = DetectCtx {
        rp,
        cell,
        proj: pca_projection(&trajs, traj.dim()),
        refiner,
    };
    Ok(ctx.events_for_pair(traj, traj, true))
}

/// Cross-intersection events between two trajectories (no minimum time
/// separation; the velocity comparison at the common point decides whether
/// the flow field is single-valued there).
pub fn find_cross_intersections(
    ta: &Trajectory,
    tb: &Trajectory,
    params: &DetectionParams,
    refiner: Option<&Refiner>,
) -> Result<Vec<IntersectionEvent>> {
    if ta.dim() != tb.dim() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory dims {} vs {}",
            ta.dim(),
            tb.dim()
        )));
    }
    let trajs = [ta, tb];
    let rp = params.resolve(set_scale(&trajs))?;
    let cell = detection_cell(&trajs, &rp);
    let ctx = DetectCtx {
        rp,
        cell,
        proj: pca_projection(&trajs, ta.dim()),
        refiner,
    };
    Ok(ctx.events_for_pair(ta, tb, false))
}

fn detection_cell(trajs: &[&Trajectory], rp: &ResolvedParams) -> f64 {
    let med = median_segment_length(trajs);
    (4.0 * rp.eps_pos).max(med).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    StrictlyMarkovian,
    InitialStateMarkovian,
    NonMarkovian,
}

impl Verdict {
    pub fn code(self) -> &'static str {
        match self {
            Verdict::StrictlyMarkovian => "SM",
            Verdict::InitialStateMarkovian => "IM",
            Verdict::NonMarkovian => "NM",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub horizon: f64,
    pub params: ResolvedParams,
    /// Per-trajectory self-intersection events.
    pub self_events: Vec<Vec<IntersectionEvent>>,
    /// `(traj_a, traj_b, events)` for each pair with findings.
    pub cross_events: Vec<(usize, usize, Vec<IntersectionEvent>)>,
    pub nm_ratio: f64,
    pub near_miss_count: usize,
    pub purity_shortcut_applied: bool,
    pub caveats: Vec<String>,
}

impl ClassificationReport {
    pub fn accepted_self_count(&self) -> usize {
        self.self_events
            .iter()
            .flatten()
            .filter(|e| e.kind.accepted())
            .count()
    }

    pub fn accepted_cross_count(&self) -> usize {
        self.cross_events
            .iter()
            .flat_map(|(_, _, evs)| evs)
            .filter(|e| e.kind.accepted())
            .count()
    }

    /// External JSON document: flattened event list keyed by trajectory.
    pub fn to_json(&self) -> serde_json::Value {
        let mut events = Vec::new();
        for (tid, evs) in self.self_events.iter().enumerate() {
            for e in evs {
                events.push(serde_json::json!({
                    "traj_id": tid,
                    "partner_id": tid,
                    "t1": e.t1,
                    "t2": e.t2,
                    "residual": e.residual,
                    "kind": e.kind,
                    "velocity_angle": e.velocity_angle,
                }));
            }
        }
        for (a, b, evs) in &self.cross_events {
            for e in evs {
                events.push(serde_json::json!({
                    "traj_id": a,
                    "partner_id": b,
                    "t1": e.t1,
                    "t2": e.t2,
                    "residual": e.residual,
                    "kind": e.kind,
                    "velocity_angle": e.velocity_angle,
                }));
            }
        }
        serde_json::json!({
            "verdict": self.verdict,
            "horizon": self.horizon,
            "params": self.params,
            "events": events,
            "nm_ratio": self.nm_ratio,
            "near_miss_count": self.near_miss_count,
            "purity_shortcut_applied": self.purity_shortcut_applied,
            "caveats": self.caveats,
        })
    }
}

fn validate_set(set: &TrajectorySet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidInput("cannot classify an empty set".into()));
    }
    for tr in &set.trajectories {
        for s in &tr.samples {
            if !s.v.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(
                    "trajectory has non-finite derivatives; ingest with a derivative policy first"
                        .into(),
                ));
            }
        }
    }
    Ok(())
}

/// Full SM/IM/NM classification of a trajectory set, optionally informed by
/// the generating model (refinement + the time-independence witness).
pub fn classify(
    set: &TrajectorySet,
    params: &DetectionParams,
    gen: Option<&AffineGenerator>,
) -> Result<ClassificationReport> {
    validate_set(set)?;
    if let Some(g) = gen {
        if g.dim != set.dim {
            return Err(Error::DimensionMismatch(format!(
                "generator dim {} vs set dim {}",
                g.dim, set.dim
            )));
        }
    }
    let trajs: Vec<&Trajectory> = set.trajectories.iter().collect();
    let scale = set_scale(&trajs);
    let rp = params.resolve(scale)?;
    let cell = detection_cell(&trajs, &rp);
    let proj = pca_projection(&trajs, set.dim);
    let tol = set
        .trajectories
        .iter()
        .filter_map(|t| t.meta.map(|m| m.tol))
        .fold(f64::NAN, f64::min);
    let refiner_holder = gen.map(|g| Refiner {
        gen: g,
        tol: if tol.is_finite() { tol } else { DEFAULT_TOL },
    });
    let refiner = refiner_holder.as_ref();

    // Purity shortcut: when |x|^2 strictly decreases away from stationary
    // points, no position can recur, so the self search may be skipped.
    let purity_shortcut_applied = matches!(
        (square_compatible(set.dim), purity_monotone_resolved(set, &rp)),
        (true, true)
    );

    let ctx = DetectCtx {
        rp,
        cell,
        proj,
        refiner,
    };

    let self_events: Vec<Vec<IntersectionEvent>> = if purity_shortcut_applied {
        vec![Vec::new(); set.len()]
    } else {
        set.trajectories
            .par_iter()
            .map(|tr| ctx.events_for_pair(tr, tr, true))
            .collect()
    };

    let pairs: Vec<(usize, usize)> = (0..set.len())
        .flat_map(|i| ((i + 1)..set.len()).map(move |j| (i, j)))
        .collect();
    let cross_events: Vec<(usize, usize, Vec<IntersectionEvent>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            (
                i,
                j,
                ctx.events_for_pair(&set.trajectories[i], &set.trajectories[j], false),
            )
        })
        .filter(|(_, _, evs)| !evs.is_empty())
        .collect();

    let nm_hits = self_events
        .iter()
        .filter(|evs| evs.iter().any(|e| e.kind.accepted()))
        .count();
    let nm_ratio = nm_hits as f64 / set.len() as f64;
    let near_miss_count = self_events
        .iter()
        .flatten()
        .chain(cross_events.iter().flat_map(|(_, _, e)| e))
        .filter(|e| !e.kind.accepted())
        .count();

    let any_self = nm_hits > 0;
    let any_cross = cross_events
        .iter()
        .any(|(_, _, evs)| evs.iter().any(|e| e.kind.accepted()));
    let horizon = set.horizon();

    let verdict = if any_self {
        Verdict::NonMarkovian
    } else if any_cross {
        Verdict::InitialStateMarkovian
    } else if let Some(g) = gen {
        if g.is_time_independent(horizon.max(1.0)) {
            Verdict::StrictlyMarkovian
        } else {
            Verdict::InitialStateMarkovian
        }
    } else {
        // Data only: the velocity field is single-valued as far as sampled —
        // no near-coincident pair (residual within eps_pos) carried distinct
        // velocities.
        let multi_valued = cross_events
            .iter()
            .flat_map(|(_, _, evs)| evs)
            .any(|e| e.residual <= ctx.rp.eps_pos);
        if multi_valued {
            Verdict::InitialStateMarkovian
        } else {
            Verdict::StrictlyMarkovian
        }
    };

    let mut caveats = vec![format!(
        "verdict holds up to horizon {horizon:.6} with {} sampled trajectories",
        set.len()
    )];
    if purity_shortcut_applied {
        caveats.push("purity strictly decreasing: self-intersection search skipped".into());
    }
    if gen.is_none() {
        caveats.push("no model attached: SM certification is data-only".into());
    }

    Ok(ClassificationReport {
        verdict,
        horizon,
        params: ctx.rp,
        self_events,
        cross_events,
        nm_ratio,
        near_miss_count,
        purity_shortcut_applied,
        caveats,
    })
}

/// Fraction of trajectories with at least one accepted self event, plus the
/// near-miss count (reported separately).
pub fn nm_ratio(set: &TrajectorySet, params: &DetectionParams) -> Result<(f64, usize)> {
    validate_set(set)?;
    let trajs: Vec<&Trajectory> = set.trajectories.iter().collect();
    let rp = params.resolve(set_scale(&trajs))?;
    let cell = detection_cell(&trajs, &rp);
    let proj = pca_projection(&trajs, set.dim);
    let ctx = DetectCtx {
        rp,
        cell,
        proj,
        refiner: None,
    };
    let per: Vec<Vec<IntersectionEvent>> = set
        .trajectories
        .par_iter()
        .map(|tr| ctx.events_for_pair(tr, tr, true))
        .collect();
    let hits = per
        .iter()
        .filter(|evs| evs.iter().any(|e| e.kind.accepted()))
        .count();
    let near = per
        .iter()
        .flatten()
        .filter(|e| !e.kind.accepted())
        .count();
    Ok((hits as f64 / set.len() as f64, near))
}

fn square_compatible(dim: usize) -> bool {
    let n = ((dim + 1) as f64).sqrt().round() as usize;
    n >= 2 && n * n == dim + 1
}

fn purity_monotone_resolved(set: &TrajectorySet, rp: &ResolvedParams) -> bool {
    set.trajectories.iter().all(|tr| {
        tr.samples.iter().all(|s| {
            let speed = s.v.norm();
            speed < rp.eps_speed || 2.0 * s.x.dot(&s.v) < 0.0
        })
    })
}

/// True iff `d|x|^2/dt < 0` at every sample whose speed exceeds the
/// stationary-point floor. Sufficient (not necessary) for the absence of
/// self-intersections. Errors when the dimension is not `n^2 - 1`.
pub fn purity_monotone_check(set: &TrajectorySet) -> Result<bool> {
    if !square_compatible(set.dim) {
        return Err(Error::InvalidDimension(format!(
            "dim {} is not n^2 - 1 for any qudit dimension n",
            set.dim
        )));
    }
    validate_set(set)?;
    let trajs: Vec<&Trajectory> = set.trajectories.iter().collect();
    let rp = DetectionParams::default().resolve(set_scale(&trajs))?;
    Ok(purity_monotone_resolved(set, &rp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ops, GeneratorModel, RateSchedule};
    use crate::store::{Provenance, SamplerSpec, SamplerStrategy};

    fn compile(
        h: Vec<(crate::bloch::CMatrix, RateSchedule)>,
        c: Vec<(crate::bloch::CMatrix, RateSchedule)>,
        label: &str,
    ) -> AffineGenerator {
        GeneratorModel::new(2, h, c, label).unwrap().compile().unwrap()
    }

    fn run(
        gen: &AffineGenerator,
        x0: Vec<f64>,
        t_max: f64,
        opts: IntegrateOpts,
    ) -> Trajectory {
        integrate(gen, &DVector::from_vec(x0), (0.0, t_max), opts).unwrap()
    }

    fn ex3_gen() -> AffineGenerator {
        compile(
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
    }

    fn ex4_gen() -> AffineGenerator {
        compile(
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
    }

    fn ex5_gen(schedule: RateSchedule) -> AffineGenerator {
        compile(
            vec![(ops::sigma_x(), RateSchedule::Constant { value: 1.0 })],
            vec![(ops::sigma_minus(), schedule)],
            "ex5",
        )
    }

    fn accepted(evs: &[IntersectionEvent]) -> Vec<&IntersectionEvent> {
        evs.iter().filter(|e| e.kind.accepted()).collect()
    }

    #[test]
    fn axis_oscillation_self_intersects() {
        let gen = ex3_gen();
        let tr = run(&gen, vec![0.0, 0.0, 1.0], 60.0, IntegrateOpts::default());
        let p = DetectionParams::default();
        let refiner = Refiner { gen: &gen, tol: DEFAULT_TOL };
        let evs = find_self_intersections(&tr, &p, Some(&refiner)).unwrap();
        let acc = accepted(&evs);
        assert!(!acc.is_empty(), "expected z-axis self events, got {evs:?}");
        assert!(
            acc.iter()
                .any(|e| matches!(e.kind, EventKind::Retrace | EventKind::Crossing)),
            "no retrace/crossing among accepted: {acc:?}"
        );
        for e in &acc {
            assert!(e.residual <= 1e-9, "residual too large: {}", e.residual);
            assert!(e.t2 - e.t1 > 0.1, "event times too close: {e:?}");
        }
    }

    #[test]
    fn monotone_contraction_has_no_self_events() {
        let gen = ex4_gen();
        let p = DetectionParams::default();
        let refiner = Refiner { gen: &gen, tol: DEFAULT_TOL };
        for x0 in [vec![1.0, 0.0, 0.0], vec![0.3, -0.5, 0.8], vec![0.0, 0.0, 1.0]] {
            let tr = run(&gen, x0, 10.0, IntegrateOpts::default());
            let evs = find_self_intersections(&tr, &p, Some(&refiner)).unwrap();
            assert!(accepted(&evs).is_empty(), "false positive: {evs:?}");
        }
    }

    #[test]
    fn ramped_decay_spiral_crosses_itself() {
        let gen = ex5_gen(RateSchedule::HoldThenRamp {
            hold: 0.35,
            t_eq: 40.0,
            rate: 0.05,
            cap: 300.0,
        });
        let tr = run(
            &gen,
            vec![0.0, 0.0, 1.0],
            200.0,
            IntegrateOpts {
                tol: 1e-10,
                h_max: Some(200.0 / 2048.0),
            },
        );
        let p = DetectionParams::default();
        let refiner = Refiner { gen: &gen, tol: 1e-10 };
        let evs = find_self_intersections(&tr, &p, Some(&refiner)).unwrap();
        let acc = accepted(&evs);
        assert!(!acc.is_empty(), "expected a self-crossing, got {evs:?}");
        assert!(acc.iter().any(|e| e.kind == EventKind::Crossing));
    }

    #[test]
    fn constant_decay_spiral_is_clean() {
        let gen = ex5_gen(RateSchedule::Constant { value: 1.0 });
        let tr = run(&gen, vec![0.0, 0.0, 1.0], 12.0, IntegrateOpts::default());
        let p = DetectionParams::default();
        let refiner = Refiner { gen: &gen, tol: DEFAULT_TOL };
        let evs = find_self_intersections(&tr, &p, Some(&refiner)).unwrap();
        assert!(
            accepted(&evs).is_empty(),
            "spiral into the focus must not be flagged: {evs:?}"
        );
    }

    #[test]
    fn switching_rotation_axes_self_intersects() {
        // rotate about y, then x, then z; the last arc re-enters the first
        let d1 = std::f64::consts::FRAC_PI_2;
        let d2 = std::f64::consts::FRAC_PI_4;
        let window = |on: usize| RateSchedule::PiecewiseConstant {
            durations: vec![d1, d2, 100.0],
            values: (0..3).map(|k| (k == on) as u8 as f64).collect(),
            repeat: false,
        };
        let gen = compile(
            vec![
                (ops::sigma_y(), window(0)),
                (ops::sigma_x(), window(1)),
                (ops::sigma_z(), window(2)),
            ],
            vec![],
            "ex2",
        );
        let tr = run(&gen, vec![0.0, 0.0, 1.0], 5.0, IntegrateOpts::default());
        let p = DetectionParams::default();
        let refiner = Refiner { gen: &gen, tol: DEFAULT_TOL };
        let evs = find_self_intersections(&tr, &p, Some(&refiner)).unwrap();
        let acc = accepted(&evs);
        assert!(!acc.is_empty(), "unitary path should cross itself: {evs:?}");
        let e = acc
            .iter()
            .find(|e| (&e.x1 - DVector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-5)
            .expect("crossing at (1,0,0)");
        assert!((e.t1 - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
        assert!((e.t2 - 1.5 * std::f64::consts::PI).abs() < 1e-6);
        assert!((&e.v1 - DVector::from_vec(vec![0.0, 0.0, -2.0])).norm() < 1e-5);
        assert!((&e.v2 - DVector::from_vec(vec![0.0, 2.0, 0.0])).norm() < 1e-5);
        assert!((e.velocity_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-4);
    }

    #[test]
    fn shared_ray_cross_event_detected() {
        // transverse dephasing rate gamma(t) = t: x(t) = x0 exp(-t^2)
        let gen = compile(
            vec![],
            vec![(ops::sigma_z(), RateSchedule::LinearRamp { start: 0.0, slope: 1.0 })],
            "remark4",
        );
        let ta = run(&gen, vec![1.0, 0.0, 0.0], 3.0, IntegrateOpts::default());
        let tb = run(&gen, vec![0.5, 0.0, 0.0], 3.0, IntegrateOpts::default());
        let p = DetectionParams::default();
        let refiner = Refiner { gen: &gen, tol: DEFAULT_TOL };
        let evs = find_cross_intersections(&ta, &tb, &p, Some(&refiner)).unwrap();
        let acc = accepted(&evs);
        assert!(!acc.is_empty(), "same ray, different speeds: {evs:?}");
        assert!(acc.iter().any(|e| e.velocity_relmag > 1e-3));
        // while each trajectory alone never self-intersects
        let se = find_self_intersections(&ta, &p, Some(&refiner)).unwrap();
        assert!(accepted(&se).is_empty());
    }

    #[test]
    fn time_independent_flow_has_no_cross_events() {
        let gen = compile(
            vec![],
            vec![(ops::sigma_z(), RateSchedule::Constant { value: 1.0 })],
            "dephasing",
        );
        let ta = run(&gen, vec![1.0, 0.0, 0.3], 5.0, IntegrateOpts::default());
        let tb = run(&gen, vec![0.0, 1.0, -0.6], 5.0, IntegrateOpts::default());
        let p = DetectionParams::default();
        let evs = find_cross_intersections(&ta, &tb, &p, None).unwrap();
        assert!(accepted(&evs).is_empty(), "uniqueness violated: {evs:?}");
    }

    #[test]
    fn identical_trajectories_are_coincident_velocity() {
        let gen = ex4_gen();
        let tr = run(&gen, vec![0.6, 0.2, -0.4], 5.0, IntegrateOpts::default());
        let p = DetectionParams::default();
        let evs = find_cross_intersections(&tr, &tr, &p, None).unwrap();
        assert!(
            evs.is_empty(),
            "equal position and velocity must be discarded: {evs:?}"
        );
    }

    #[test]
    fn detector_works_beyond_three_dimensions() {
        // figure-eight embedded in 8 dimensions via a fixed rotation
        let mut samples = Vec::new();
        let dt = 2e-3;
        let embed = |x: f64, y: f64| {
            let mut v = DVector::zeros(8);
            // two fixed unit vectors with disjoint support
            v[1] = x * 0.6;
            v[4] = x * 0.8;
            v[2] = y * 0.8;
            v[6] = -y * 0.6;
            v
        };
        let n = (2.0 * std::f64::consts::PI / dt) as usize;
        for i in 0..=n {
            let t = i as f64 * dt;
            let (x, y) = ((2.0 * t).sin(), t.sin());
            let (vx, vy) = (2.0 * (2.0 * t).cos(), t.cos());
            samples.push(Sample {
                t,
                x: embed(x, y),
                v: embed(vx, vy),
            });
        }
        let tr = Trajectory::from_samples(samples, None).unwrap();
        let evs = find_self_intersections(&tr, &DetectionParams::default(), None).unwrap();
        assert!(
            accepted(&evs).iter().any(|e| e.kind == EventKind::Crossing),
            "embedded figure-eight crossing missed: {evs:?}"
        );
    }

    fn set_from(gen: &AffineGenerator, states: &[Vec<f64>], t_max: f64) -> TrajectorySet {
        let trajectories = states
            .iter()
            .map(|x0| run(gen, x0.clone(), t_max, IntegrateOpts::default()))
            .collect();
        TrajectorySet::new(
            3,
            trajectories,
            Provenance::ModelGenerated { label: gen.label.clone() },
            None,
        )
        .unwrap()
    }

    fn canonical_vecs() -> Vec<Vec<f64>> {
        crate::store::canonical_states(3)
            .into_iter()
            .map(|v| v.iter().cloned().collect())
            .collect()
    }

    #[test]
    fn classify_time_independent_expansion_as_sm() {
        let gen = compile(
            vec![],
            vec![(ops::sigma_z(), RateSchedule::Constant { value: -1.0 })],
            "ex1",
        );
        let set = set_from(&gen, &canonical_vecs(), 1.0);
        let rep = classify(&set, &DetectionParams::default(), Some(&gen)).unwrap();
        assert_eq!(rep.verdict, Verdict::StrictlyMarkovian);
        assert_eq!(rep.accepted_self_count(), 0);
    }

    #[test]
    fn classify_monotone_contraction_as_im() {
        let gen = ex4_gen();
        let mut states = canonical_vecs();
        states.push(vec![0.6, 0.0, 0.0]);
        states.push(vec![0.0, 0.6, 0.0]);
        let set = set_from(&gen, &states, 10.0);
        let rep = classify(&set, &DetectionParams::default(), Some(&gen)).unwrap();
        assert_eq!(rep.verdict, Verdict::InitialStateMarkovian);
        assert!(rep.purity_shortcut_applied);
        assert_eq!(rep.nm_ratio, 0.0);
    }

    #[test]
    fn classify_square_wave_bath_as_nm() {
        let gen = ex3_gen();
        let set = set_from(&gen, &canonical_vecs(), 60.0);
        let rep = classify(&set, &DetectionParams::default(), Some(&gen)).unwrap();
        assert_eq!(rep.verdict, Verdict::NonMarkovian);
        assert!(rep.accepted_self_count() >= 1);
        let j = rep.to_json();
        assert_eq!(j["verdict"], "NonMarkovian");
        assert!(j["events"].as_array().unwrap().iter().any(|e| e["residual"]
            .as_f64()
            .unwrap()
            < 1e-9));
    }

    #[test]
    fn random_only_sampling_gives_zero_ratio_with_near_misses() {
        let gen = ex3_gen();
        let spec = SamplerSpec::new(SamplerStrategy::PureUniform, 20, 11);
        let states: Vec<Vec<f64>> = crate::store::sample_initial_states(&spec, 3)
            .unwrap()
            .into_iter()
            .map(|v| v.iter().cloned().collect())
            .collect();
        let set = set_from(&gen, &states, 40.0);
        let (ratio, near) = nm_ratio(&set, &DetectionParams::default()).unwrap();
        assert_eq!(ratio, 0.0, "off-axis recurrences must be demoted");
        assert!(near > 0, "expected near misses to be reported");
    }

    #[test]
    fn purity_monotonicity_checks() {
        let gen4 = ex4_gen();
        let set4 = set_from(&gen4, &canonical_vecs(), 10.0);
        assert!(purity_monotone_check(&set4).unwrap());

        let gen3 = ex3_gen();
        let set3 = set_from(&gen3, &canonical_vecs(), 60.0);
        assert!(!purity_monotone_check(&set3).unwrap());

        // unitary precession: purity constant, speed nonzero
        let genu = compile(
            vec![(ops::sigma_z(), RateSchedule::Constant { value: 1.0 })],
            vec![],
            "precession",
        );
        let setu = set_from(&genu, &[vec![1.0, 0.0, 0.0]], 5.0);
        assert!(!purity_monotone_check(&setu).unwrap());

        // dim 2 is not n^2 - 1
        let flat = TrajectorySet::new(
            2,
            vec![Trajectory::from_samples(
                vec![
                    Sample { t: 0.0, x: DVector::zeros(2), v: DVector::zeros(2) },
                    Sample { t: 1.0, x: DVector::from_vec(vec![1.0, 0.0]), v: DVector::zeros(2) },
                ],
                None,
            )
            .unwrap()],
            Provenance::Ingested { source: "synthetic".into() },
            None,
        )
        .unwrap();
        assert!(purity_monotone_check(&flat).is_err());
    }

    #[test]
    fn shrinking_eps_pos_never_creates_events() {
        let gen = ex3_gen();
        let set = set_from(&gen, &canonical_vecs(), 60.0);
        let base = classify(&set, &DetectionParams::default(), Some(&gen)).unwrap();
        let tight = classify(
            &set,
            &DetectionParams {
                eps_pos: Some(base.params.eps_pos / 10.0),
                ..DetectionParams::default()
            },
            Some(&gen),
        )
        .unwrap();
        assert!(tight.accepted_self_count() <= base.accepted_self_count());
        assert_eq!(tight.verdict, base.verdict);
    }

    #[test]
    fn classification_is_deterministic() {
        let gen = ex3_gen();
        let set = set_from(&gen, &canonical_vecs(), 60.0);
        let a = classify(&set, &DetectionParams::default(), Some(&gen)).unwrap();
        let b = classify(&set, &DetectionParams::default(), Some(&gen)).unwrap();
        assert_eq!(
            serde_json::to_string(&a.to_json()).unwrap(),
            serde_json::to_string(&b.to_json()).unwrap()
        );
    }

    #[test]
    fn empty_set_is_rejected() {
        let set = TrajectorySet::new(
            3,
            vec![],
            Provenance::ModelGenerated { label: "x".into() },
            None,
        )
        .unwrap();
        assert!(classify(&set, &DetectionParams::default(), None).is_err());
    }

    #[test]
    fn params_must_be_positive() {
        let p = DetectionParams {
            eps_angle: -1.0,
            ..DetectionParams::default()
        };
        assert!(p.resolve(1.0).is_err());
    }
}
