fn main() {
    std::process::exit(harmload::cli::run(std::env::args_os()));
}
