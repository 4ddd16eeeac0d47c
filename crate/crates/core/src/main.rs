fn main() {
    std::process::exit(sacloc::cli::main_entry());
}
