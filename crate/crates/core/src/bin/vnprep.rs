fn main() {
    std::process::exit(vnprep::cli::run(std::env::args_os()));
}
