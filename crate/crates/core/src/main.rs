fn main() {
    std::process::exit(qnd::cli::main_with_args(std::env::args_os()));
}
