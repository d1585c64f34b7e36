fn main() {
    std::process::exit(hybrid_bell::cli::run(std::env::args_os()));
}
