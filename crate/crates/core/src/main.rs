fn main() {
    std::process::exit(recap_rb::cli::run(std::env::args_os()));
}
