fn main() {
    std::process::exit(qsat_cli::run(std::env::args_os()));
}
