fn main() {
    std::process::exit(repengine::cli::run(std::env::args_os()));
}
