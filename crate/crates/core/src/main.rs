fn main() {
    std::process::exit(shiftfuse::cli::main_from_args());
}
