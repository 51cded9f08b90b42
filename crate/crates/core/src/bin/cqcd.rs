fn main() {
    std::process::exit(cqcd::cli::main_with_args(std::env::args_os()));
}
