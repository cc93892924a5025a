fn main() {
    std::process::exit(coat::cli::run());
}
