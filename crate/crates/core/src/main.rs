fn main() {
    std::process::exit(omega_lab::cli::main_with_args(std::env::args_os()));
}
