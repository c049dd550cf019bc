fn main() {
    std::process::exit(mpivdr::harness::cli::run_cli(std::env::args_os()));
}
