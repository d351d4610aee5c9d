fn main() {
    std::process::exit(foldcert_cli::main_with_args(std::env::args_os()));
}
