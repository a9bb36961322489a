fn main() {
    std::process::exit(rjdcov::cli::main_with_args(std::env::args_os()));
}
