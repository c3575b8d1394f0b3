fn main() {
    std::process::exit(ucbs_cli::main_with_args(std::env::args_os()));
}
