fn main() {
    std::process::exit(phosforge::cli::run(std::env::args_os()));
}
