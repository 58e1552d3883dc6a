fn main() {
    std::process::exit(hs_mimo::cli::run(std::env::args_os()));
}
