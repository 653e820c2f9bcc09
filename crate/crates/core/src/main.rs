fn main() {
    std::process::exit(domain_scope::cli::run(std::env::args_os()));
}
