fn main() {
    std::process::exit(g2s::cli::main());
}
