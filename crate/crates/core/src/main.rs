fn main() {
    std::process::exit(regionlearn::cli::main_entry());
}
