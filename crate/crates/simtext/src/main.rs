fn main() {
    std::process::exit(simtext::cli::run(std::env::args_os()));
}
