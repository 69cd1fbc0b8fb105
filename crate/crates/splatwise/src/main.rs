fn main() {
    std::process::exit(splatwise::cli::main_with_args(std::env::args_os()));
}
