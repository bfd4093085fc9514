fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(bigsur_cli::run_cli(&args));
}
