fn main() {
    std::process::exit(frlc::cli::run(std::env::args_os()));
}
