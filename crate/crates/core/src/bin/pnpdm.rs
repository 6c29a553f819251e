fn main() {
    std::process::exit(pnpdm::cli::main_with_args(std::env::args_os()));
}
