fn main() {
    std::process::exit(kernelbundle::shell::cli::main_with_args(std::env::args_os()));
}
