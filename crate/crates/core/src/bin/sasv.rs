fn main() {
    std::process::exit(sasv::cli::run(std::env::args()));
}
