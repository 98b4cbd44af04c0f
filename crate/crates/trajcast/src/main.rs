fn main() {
    std::process::exit(trajcast::cli::run_from_env());
}
