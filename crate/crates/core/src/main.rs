fn main() {
    std::process::exit(lumen_core::cli::run(std::env::args_os()));
}
