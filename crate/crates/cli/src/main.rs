fn main() {
    std::process::exit(disfluency_cli::run(std::env::args_os()));
}
