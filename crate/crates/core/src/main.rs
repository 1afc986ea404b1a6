fn main() {
    std::process::exit(factorsieve::cli::main_with_args(std::env::args_os()));
}
