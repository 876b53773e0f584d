fn main() {
    std::process::exit(kcmlab::cli::run(std::env::args_os()));
}
