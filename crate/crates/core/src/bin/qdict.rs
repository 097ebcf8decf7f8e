fn main() {
    std::process::exit(qdict::cli::run(std::env::args_os()));
}
