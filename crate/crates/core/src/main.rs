fn main() {
    std::process::exit(phimix::cli::run(std::env::args_os()));
}
