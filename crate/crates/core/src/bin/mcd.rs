fn main() {
    std::process::exit(mcd::cli::run(std::env::args_os()));
}
