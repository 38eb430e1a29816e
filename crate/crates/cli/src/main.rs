fn main() {
    std::process::exit(she_moments_cli::main_with_args(std::env::args_os()));
}
