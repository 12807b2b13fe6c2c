fn main() {
    std::process::exit(acd_core::cli::run(std::env::args_os()));
}
