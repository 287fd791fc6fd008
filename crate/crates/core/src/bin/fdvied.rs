fn main() {
    std::process::exit(fdvied::cli::run(std::env::args_os()));
}
