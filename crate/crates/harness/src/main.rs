fn main() {
    std::process::exit(dlm_harness::cli::run(std::env::args_os()));
}
