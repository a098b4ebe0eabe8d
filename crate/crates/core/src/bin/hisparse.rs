fn main() {
    std::process::exit(hisparse::cli::main_with_args(std::env::args_os()));
}
