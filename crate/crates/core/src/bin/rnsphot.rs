fn main() {
    std::process::exit(rns_photonic::cli::run(std::env::args_os()));
}
