//! End-to-end classification: sample a trajectory ensemble from a catalog
//! model and decide SM / IM / NM from its intersection structure.
//!
//! ```bash
//! cargo run --example classify_a_process
//! ```

use trajmark::catalog::{build, CatalogOverrides};
use trajmark::detect::classify;
use trajmark::DetectionParams;

fn main() -> trajmark::Result<()> {
    // Time-dependent rates that stay positive: trajectories of different
    // initial states may cross, but no single trajectory revisits a point.
    for id in ["ex1", "ex4", "ex2"] {
        let entry = build(id, &CatalogOverrides::default())?;
        let set = entry.build_set(5, 7)?;
        let gen = entry.generator()?;
        let report = classify(&set, &DetectionParams::default(), gen.as_ref())?;

        println!(
            "{id}: {} (expected {}) — {} trajectories, {} self / {} cross events, {} near misses",
            report.verdict.code(),
            entry.expected.code(),
            set.len(),
            report.accepted_self_count(),
            report.accepted_cross_count(),
            report.near_miss_count
        );
        for caveat in &report.caveats {
            println!("    caveat: {caveat}");
        }
    }
    Ok(())
}
