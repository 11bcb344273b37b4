fn main() {
    std::process::exit(est_cli::run(std::env::args_os()));
}
