fn main() { std::process::exit(reprogram::cli::run_cli(&std::env::args().collect::<Vec<_>>())) }
