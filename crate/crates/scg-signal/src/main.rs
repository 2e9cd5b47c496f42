fn main() {
    std::process::exit(scg_signal::cli::run());
}
