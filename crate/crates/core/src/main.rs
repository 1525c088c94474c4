fn main() {
    std::process::exit(deferral::cli::main());
}
