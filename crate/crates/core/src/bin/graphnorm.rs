fn main() {
    std::process::exit(graphnorm::cli::main_with_args(std::env::args_os()));
}
