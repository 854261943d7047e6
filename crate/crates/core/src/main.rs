fn main() {
    std::process::exit(smoothdiff::cli::main());
}
