//! Adaptive integration with dense output: step control, schedule
//! breakpoints, and continuous evaluation between accepted steps.
//!
//! ```bash
//! cargo run --example integrate_and_sample
//! ```

use trajmark::catalog::{build, CatalogOverrides};
use trajmark::propagate::{integrate, IntegrateOpts};
use trajmark::BlochVector;

fn main() -> trajmark::Result<()> {
    // Amplitude damping with a square-wave rate (alternating decay channels).
    let entry = build("ex3", &CatalogOverrides::default())?;
    let gen = entry.generator()?.expect("ex3 compiles to an affine generator");

    let x0 = BlochVector::from_vec(vec![0.0, 0.0, 1.0]);
    let traj = integrate(
        &gen,
        &x0,
        (0.0, 30.0),
        IntegrateOpts {
            tol: 1e-10,
            h_max: None,
        },
    )?;

    let meta = traj.meta.as_ref().expect("integrator attaches step stats");
    println!(
        "{} samples over [{}, {}]; steps accepted = {}, rejected = {}",
        traj.samples.len(),
        traj.t0(),
        traj.t1(),
        meta.accepted,
        meta.rejected
    );

    // Dense output: position and velocity at arbitrary times, not just at
    // accepted steps.
    for &t in &[0.0, 5.0, 10.0, 20.0, 30.0] {
        let (x, v) = traj.dense_eval(t)?;
        println!(
            "t = {t:>5}: z = {:+.6}, |v| = {:.3e}",
            x[2],
            v.norm()
        );
    }
    Ok(())
}
