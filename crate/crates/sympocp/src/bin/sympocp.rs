fn main() {
    std::process::exit(sympocp::cli::run(std::env::args_os()));
}
