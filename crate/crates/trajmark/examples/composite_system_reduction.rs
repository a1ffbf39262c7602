//! Memory from a unitary dilation: a qubit exchanging one excitation with a
//! lossless cavity evolves unitarily as a pair, but its reduced Bloch
//! trajectory retraces itself — every random initial state shows memory.
//!
//! ```bash
//! cargo run --example composite_system_reduction
//! ```

use trajmark::catalog::{build, jc_closed_form, CatalogOverrides};
use trajmark::detect::nm_ratio;
use trajmark::DetectionParams;

fn main() -> trajmark::Result<()> {
    let entry = build("jc_vacuum", &CatalogOverrides::default())?;

    // The entry integrates the 15-dimensional composite Bloch vector and
    // projects back to the qubit's 3 coordinates by partial trace.
    let set = entry.build_set(4, 11)?;
    println!(
        "reduced qubit set: {} trajectories, dim = {}, horizon = {:.4}",
        set.len(),
        set.dim,
        set.horizon()
    );

    // Spot check against the closed-form vacuum Rabi solution.
    let tr = &set.trajectories[0];
    let q0 = tr.initial_state.clone();
    let mut worst = 0.0f64;
    for s in tr.samples.iter().step_by(50) {
        let exact = jc_closed_form(&q0, 1.0, s.t);
        worst = worst.max((&s.x - exact).norm());
    }
    println!("max deviation from the closed form: {worst:.2e}");

    // Fraction of trajectories with at least one accepted self-event.
    let (ratio, near_misses) = nm_ratio(&set, &DetectionParams::default())?;
    println!("self-intersecting fraction: {ratio:.2} ({near_misses} near misses)");
    Ok(())
}
