fn main() {
    std::process::exit(mcie::cli::main_with_args(std::env::args_os()));
}
