fn main() {
    std::process::exit(hergm_cli::main_with_args(std::env::args_os()));
}
