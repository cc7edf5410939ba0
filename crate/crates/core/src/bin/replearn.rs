fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(replearn::harness::cli::cli_dispatch(&args));
}
