fn main() {
    std::process::exit(sepccm_cli::main_with_args(std::env::args_os()));
}
