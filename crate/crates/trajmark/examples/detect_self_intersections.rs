//! Finding trajectory self-intersections: a rotation whose axis switches
//! twice sends the state back through a point it already visited, with a
//! different velocity — the geometric signature of memory.
//!
//! ```bash
//! cargo run --example detect_self_intersections
//! ```

use trajmark::catalog::{build, CatalogOverrides};
use trajmark::detect::{find_self_intersections, Refiner};
use trajmark::propagate::{integrate, IntegrateOpts};
use trajmark::{BlochVector, DetectionParams};

fn main() -> trajmark::Result<()> {
    let entry = build("ex2", &CatalogOverrides::default())?;
    let gen = entry.generator()?.expect("qubit entry");

    let x0 = BlochVector::from_vec(vec![1.0, 0.0, 0.0]);
    let traj = integrate(&gen, &x0, (0.0, entry.horizon), IntegrateOpts::default())?;

    // A refiner re-integrates locally around each candidate so the reported
    // residual reflects the model, not the sampling mesh.
    let refiner = Refiner { gen: &gen, tol: 1e-12 };
    let events = find_self_intersections(&traj, &DetectionParams::default(), Some(&refiner))?;

    println!("{} events on the trajectory from (1, 0, 0):", events.len());
    for ev in &events {
        println!(
            "  {:?} at t1 = {:.6}, t2 = {:.6}: x = {:?}, angle = {:.4} rad, residual = {:.2e}",
            ev.kind,
            ev.t1,
            ev.t2,
            ev.x1.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            ev.velocity_angle,
            ev.residual
        );
    }
    Ok(())
}
