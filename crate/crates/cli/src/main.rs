fn main() {
    std::process::exit(layerrd_cli::run(std::env::args_os()));
}
