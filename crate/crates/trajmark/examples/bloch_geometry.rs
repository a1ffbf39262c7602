//! Bloch-vector machinery: SU(n) basis, density-matrix round trips, purity,
//! and trace distance.
//!
//! ```bash
//! cargo run --example bloch_geometry
//! ```

use trajmark::bloch::{from_bloch, purity, to_bloch, trace_distance, DensityMatrix, SuBasis};

fn main() -> trajmark::Result<()> {
    // The generalized Gell-Mann basis for a qutrit (n = 3, 8 elements).
    let basis = SuBasis::new(3)?;
    println!("SU(3) basis: {} traceless Hermitian elements", basis.dim());

    // Excited level |0><0| in Bloch coordinates.
    let excited = DensityMatrix::basis_state(3, 0);
    let x = to_bloch(&excited, &basis)?;
    println!("|0><0| as a Bloch vector: {:?}", x.as_slice());

    // Round trip: vector -> matrix -> vector is exact to machine precision.
    let back = from_bloch(&x, &basis)?;
    let x2 = to_bloch(&back, &basis)?;
    let drift: f64 = x.iter().zip(x2.iter()).map(|(a, b)| (a - b).abs()).sum();
    println!("round-trip drift: {drift:.2e}");

    // Purity interpolates between 1/n (maximally mixed) and 1 (pure).
    let mixed = to_bloch(&DensityMatrix::maximally_mixed(3), &basis)?;
    println!(
        "purity: excited = {:.3}, maximally mixed = {:.3}",
        purity(&x, 3),
        purity(&mixed, 3)
    );

    // Trace distance: orthogonal pure states are maximally distinguishable.
    let other = DensityMatrix::basis_state(3, 1);
    println!(
        "trace distance |0><0| vs |1><1| = {:.3}, vs mixed = {:.3}",
        trace_distance(&excited, &other)?,
        trace_distance(&excited, &DensityMatrix::maximally_mixed(3))?,
    );
    Ok(())
}
