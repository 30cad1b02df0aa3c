fn main() {
    std::process::exit(dp_release::cli::run());
}
