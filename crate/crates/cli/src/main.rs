fn main() {
    std::process::exit(linemark_cli::run(std::env::args_os()));
}
