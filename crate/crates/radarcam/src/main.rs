fn main() {
    std::process::exit(radarcam::cli::run_cli(std::env::args_os()));
}
