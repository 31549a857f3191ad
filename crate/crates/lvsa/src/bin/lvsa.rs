fn main() {
    std::process::exit(lvsa::cli::run());
}
