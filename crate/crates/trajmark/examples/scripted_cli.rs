//! Driving the CLI layer programmatically: same subcommands and exit codes
//! as the `trajmark` binary, but callable from Rust (useful in test
//! harnesses and batch scripts).
//!
//! ```bash
//! cargo run --example scripted_cli
//! ```

fn run(args: &[&str]) {
    println!("$ trajmark {}", args.join(" "));
    let full: Vec<&str> = std::iter::once("trajmark").chain(args.iter().copied()).collect();
    let mut out = Vec::new();
    let code = trajmark::cli::run(full, &mut out);
    print!("{}", String::from_utf8_lossy(&out));
    println!("(exit code {code})\n");
}

fn main() {
    // Classify a catalog model, then show the resolved configuration that a
    // `--config` file could override.
    run(&["classify", "--example", "ex4", "--samples", "3", "--seed", "1"]);
    run(&["compare", "--example", "ex1", "--criteria", "decay,volume"]);
    run(&["classify", "--example", "ex4", "--dump-config"]);
    // Usage errors exit with code 2 rather than panicking.
    run(&["classify", "--example", "no-such-model"]);
}
