fn main() {
    std::process::exit(gridse::cli::main_with_args(std::env::args_os()));
}
