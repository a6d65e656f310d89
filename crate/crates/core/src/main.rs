fn main() {
    std::process::exit(exact_ect::cli::run(std::env::args_os()));
}
