//! Command-line interface (placeholder).

/// Entry point used by the `revdiff` binary.
pub fn run_from_env() -> i32 {
    run(std::env::args().skip(1).collect::<Vec<_>>())
}

/// Placeholder dispatcher.
pub fn run(_args: Vec<String>) -> i32 {
    eprintln!("not yet implemented");
    2
}
