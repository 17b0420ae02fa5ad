fn main() {
    std::process::exit(zsar::cli::run(std::env::args_os()));
}
