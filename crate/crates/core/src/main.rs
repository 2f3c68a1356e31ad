fn main() {
    std::process::exit(varbayes::cli::run(std::env::args_os()));
}
