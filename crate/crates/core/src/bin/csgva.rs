fn main() {
    std::process::exit(csgva::cli::main_with_args(std::env::args_os()));
}
