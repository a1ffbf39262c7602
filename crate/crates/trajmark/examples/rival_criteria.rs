//! Cross-checking one model against the four rival non-Markovianity
//! criteria: trace-distance revivals, canonical decay rates, CP
//! divisibility, and Bloch-volume growth.
//!
//! ```bash
//! cargo run --example rival_criteria
//! ```

use trajmark::catalog::{build, CatalogOverrides};
use trajmark::criteria::{
    blp_measure, bloch_volume_criterion, cp_divisibility_criterion, decay_rate_criterion,
    uniform_grid,
};
use trajmark::store::{SamplerSpec, SamplerStrategy};

fn main() -> trajmark::Result<()> {
    // Constant *negative* dephasing rate: trajectory geometry calls it
    // strictly Markovian (single-valued velocity field), while all four
    // rival criteria flag it — the canonical disagreement case.
    let entry = build("ex1", &CatalogOverrides::default())?;
    let model = entry.qubit_model().expect("qubit entry");
    let grid = uniform_grid(entry.horizon, 201);

    let pairs = SamplerSpec::new(SamplerStrategy::PureUniform, 10, 5);
    let results = [
        blp_measure(model, &pairs, entry.horizon, 400)?,
        decay_rate_criterion(model, &grid)?,
        cp_divisibility_criterion(model, &grid, entry.horizon / 400.0)?,
        bloch_volume_criterion(model, &grid)?,
    ];

    println!("model: {} (geometric verdict: {})", entry.id, entry.expected.code());
    for r in &results {
        println!(
            "  {:<24} {:?}  witness = {:.3e}{}",
            r.criterion.label(),
            r.verdict,
            r.witness,
            if r.inconclusive.is_empty() {
                String::new()
            } else {
                format!("  inconclusive on {:?}", r.inconclusive)
            }
        );
    }
    Ok(())
}
