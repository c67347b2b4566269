fn main() {
    std::process::exit(polycert_cli::run(std::env::args_os()));
}
