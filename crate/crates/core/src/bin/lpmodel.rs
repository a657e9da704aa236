fn main() {
    std::process::exit(lpmodel::cli::run(std::env::args_os()));
}
