fn main() {
    std::process::exit(tppkit::cli::main());
}
