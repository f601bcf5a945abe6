fn main() {
    std::process::exit(relex::cli::run(std::env::args_os()));
}
