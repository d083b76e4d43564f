fn main() {
    std::process::exit(oncosim::cli::main_entry());
}
