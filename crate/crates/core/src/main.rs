fn main() {
    std::process::exit(cuspeta::cli::main_with(std::env::args_os()));
}
