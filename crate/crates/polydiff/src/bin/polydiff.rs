fn main() {
    std::process::exit(polydiff::cli::run(std::env::args_os()));
}
