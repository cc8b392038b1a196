fn main() {
    std::process::exit(hyperlap::cli::run(std::env::args_os()));
}
