fn main() {
    std::process::exit(covmt::cli::run(std::env::args_os()));
}
