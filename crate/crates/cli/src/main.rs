fn main() {
    std::process::exit(clustcube_cli::run(std::env::args_os()));
}
