fn main() {
    std::process::exit(microstate_cli::main_with_args(std::env::args_os()));
}
