//! Defining a time-dependent master-equation model, serializing it, and
//! compiling it to the affine Bloch-space generator used everywhere else.
//!
//! ```bash
//! cargo run --example build_a_model
//! ```

use trajmark::model::{ops, GeneratorModel, RateSchedule};
use trajmark::BlochVector;

fn main() -> trajmark::Result<()> {
    // Dephasing that switches off after t = 1, plus a constant sigma_z drive.
    let model = GeneratorModel::new(
        2,
        vec![(ops::sigma_z(), RateSchedule::Constant { value: 0.5 })],
        vec![(
            ops::sigma_z(),
            RateSchedule::PiecewiseConstant {
                durations: vec![1.0, 1e6],
                values: vec![0.4, 0.0],
                repeat: false,
            },
        )],
        "driven-dephasing",
    )?;

    // Models round-trip through JSON, so they can live in config files.
    let json = model.to_json()?;
    println!("serialized model:\n{json}\n");
    let restored = GeneratorModel::from_json(&json)?;

    // Compilation produces x' = A(t) x + b(t) in Bloch coordinates.
    let gen = restored.compile()?;
    for &t in &[0.5, 2.0] {
        let field = gen.field_at(t);
        let v = field.eval(&BlochVector::from_vec(vec![1.0, 0.0, 0.0]));
        println!("velocity at (1,0,0), t = {t}: {:?}", v.as_slice());
    }
    println!(
        "time-independent over [0, 10]: {}",
        gen.is_time_independent(10.0)
    );
    Ok(())
}
