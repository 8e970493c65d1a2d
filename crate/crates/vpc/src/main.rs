fn main() {
    std::process::exit(vpc::cli::run(std::env::args_os()));
}
