fn main() {
    std::process::exit(biteuler::cli::run(std::env::args_os()));
}
