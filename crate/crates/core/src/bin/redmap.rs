fn main() {
    std::process::exit(red_dynamics::cli::run_cli(std::env::args_os()));
}
