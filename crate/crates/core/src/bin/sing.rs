fn main() {
    std::process::exit(sing_core::cli::run(std::env::args_os()));
}
