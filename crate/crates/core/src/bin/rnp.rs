fn main() {
    std::process::exit(rnp::cli::run());
}
