fn main() {
    std::process::exit(robust_evt::cli::run());
}
