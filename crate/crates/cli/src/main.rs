fn main() {
    std::process::exit(predmetric_cli::run());
}
