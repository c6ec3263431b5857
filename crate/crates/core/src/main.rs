fn main() {
    std::process::exit(logreason::cli::run(std::env::args_os()));
}
