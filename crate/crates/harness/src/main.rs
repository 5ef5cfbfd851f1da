fn main() {
    std::process::exit(afn_harness::cli::run(std::env::args_os()));
}
