fn main() {
    std::process::exit(spotvol::cli::main_with_args(std::env::args_os()));
}
