fn main() {
    std::process::exit(lghoi::cli::run(std::env::args_os()));
}
