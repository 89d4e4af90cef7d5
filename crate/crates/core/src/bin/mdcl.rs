fn main() {
    std::process::exit(mdcl::cli::run(std::env::args_os()));
}
