fn main() {
    std::process::exit(smfe::cli::run(std::env::args_os()));
}
