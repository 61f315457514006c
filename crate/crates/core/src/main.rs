fn main() {
    std::process::exit(sdde::cli::main_with_args(std::env::args_os()));
}
