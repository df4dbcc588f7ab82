fn main() {
    std::process::exit(ambig::cli::run(std::env::args_os()));
}
