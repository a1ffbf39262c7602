//! Ingesting an externally produced time series (no velocity columns) and
//! classifying it: derivatives are reconstructed by central differences.
//!
//! ```bash
//! cargo run --example ingest_external_series
//! ```

use std::fmt::Write as _;

use trajmark::detect::classify;
use trajmark::store::{ingest_timeseries, DerivativePolicy};
use trajmark::DetectionParams;

fn main() -> trajmark::Result<()> {
    // A planar figure-eight sampled at fixed rate, as a measurement rig
    // would emit it: time plus coordinates, no derivatives.
    let mut text = String::from("# trajset v1 dim=2 provenance=external\n## traj id=0\n");
    let n = 4000;
    for k in 0..=n {
        let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        writeln!(text, "{t},{},{}", (2.0 * t).sin(), t.sin()).unwrap();
    }
    let path = std::env::temp_dir().join("figure_eight_series.csv");
    std::fs::write(&path, text)?;

    let set = ingest_timeseries(&path, DerivativePolicy::CentralDifference)?;
    println!(
        "ingested {} trajectories (dim = {}) from {}",
        set.len(),
        set.dim,
        path.display()
    );

    // The lobes of a figure-eight cross at the origin: one revisited point,
    // two velocities -> non-Markovian.
    let report = classify(&set, &DetectionParams::default(), None)?;
    println!("verdict: {}", report.verdict.code());
    for ev in report.self_events.iter().flatten().filter(|e| e.kind.accepted()) {
        println!(
            "  {:?} at t1 = {:.4}, t2 = {:.4}, x = ({:+.4}, {:+.4})",
            ev.kind, ev.t1, ev.t2, ev.x1[0], ev.x1[1]
        );
    }
    Ok(())
}
