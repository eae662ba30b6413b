fn main() {
    std::process::exit(maskval::cli::run(std::env::args_os()));
}
