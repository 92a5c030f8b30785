fn main() {
    std::process::exit(rbm_lab::cli::main_with_args(std::env::args_os()));
}
