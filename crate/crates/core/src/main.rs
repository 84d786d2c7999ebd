fn main() {
    std::process::exit(sparsecode::cli::run(std::env::args_os()));
}
