fn main() {
    std::process::exit(sescc::cli::main_with_args(std::env::args_os()));
}
