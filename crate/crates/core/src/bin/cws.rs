fn main() {
    std::process::exit(cws_core::cli::run(std::env::args()));
}
