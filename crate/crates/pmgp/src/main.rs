fn main() {
    std::process::exit(pmgp::cli::main_with_args(std::env::args_os()));
}
