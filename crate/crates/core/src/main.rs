fn main() {
    std::process::exit(loomflow::cli::run(std::env::args_os()));
}
