fn main() {
    std::process::exit(degenopt::cli::run(std::env::args_os()));
}
