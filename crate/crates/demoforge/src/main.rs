fn main() {
    std::process::exit(demoforge::cli::run(std::env::args_os()));
}
