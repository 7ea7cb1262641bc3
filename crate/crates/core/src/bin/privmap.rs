fn main() {
    std::process::exit(privmap::cli::run(std::env::args_os()));
}
