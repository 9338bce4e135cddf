fn main() {
    std::process::exit(dacdr::cli::main_exit());
}
