fn main() {
    std::process::exit(sts_core::cli::main());
}
