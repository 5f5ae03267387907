fn main() {
    std::process::exit(revdiff::cli::run_from_env());
}
