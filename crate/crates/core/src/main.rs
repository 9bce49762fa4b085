fn main() {
    std::process::exit(coshf::cli::main());
}
