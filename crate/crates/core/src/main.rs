fn main() {
    std::process::exit(confcal::cli::main_from_env());
}
