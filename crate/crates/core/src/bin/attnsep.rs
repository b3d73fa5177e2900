fn main() {
    std::process::exit(attnsep::cli::main_with_args(std::env::args_os()));
}
