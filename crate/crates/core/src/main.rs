fn main() {
    std::process::exit(ddrnn::cli::main_from_env());
}
