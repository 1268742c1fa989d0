fn main() {
    std::process::exit(graphexp::cli::run());
}
