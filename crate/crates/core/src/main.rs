fn main() {
    std::process::exit(noise_lab::cli::main_with_args(std::env::args_os()));
}
