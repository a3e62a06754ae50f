fn main() {
    std::process::exit(hypernet::cli::run(std::env::args_os()));
}
