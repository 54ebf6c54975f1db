fn main() {
    std::process::exit(dame::cli::main_with_args(std::env::args_os()));
}
