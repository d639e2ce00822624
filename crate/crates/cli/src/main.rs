fn main() {
    std::process::exit(sprdm_cli::run(std::env::args_os()));
}
