fn main() {
    std::process::exit(mufen::cli::run(std::env::args_os()));
}
