fn main() {
    std::process::exit(attanchor::cli::run(std::env::args_os()));
}
