fn main() {
    std::process::exit(paver::cli::main_with_args(std::env::args_os()));
}
