fn main() {
    std::process::exit(cfbench::cli::main_with_args(std::env::args_os()));
}
