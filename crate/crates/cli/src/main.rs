fn main() {
    std::process::exit(hamspace_cli::main_with_args(std::env::args_os()));
}
