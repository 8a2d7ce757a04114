fn main() {
    std::process::exit(drgbab::cli::run(std::env::args_os()));
}
