//! The five-model comparison table: geometric verdict next to the four
//! rival criteria, rendered the same way as `trajmark table1`.
//!
//! ```bash
//! cargo run --example verdict_table
//! ```

use trajmark::catalog::table_inputs;
use trajmark::criteria::{criteria_table, render_table, table_to_json};

fn main() -> trajmark::Result<()> {
    let rows = criteria_table(&table_inputs()?)?;
    println!("{}", render_table(&rows));
    println!(
        "as JSON (first row): {}",
        serde_json::to_string_pretty(&table_to_json(&rows)[0]).unwrap()
    );
    Ok(())
}
