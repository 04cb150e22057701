fn main() {
    std::process::exit(vqcs_cli::run(std::env::args_os()));
}
