fn main() {
    std::process::exit(explainkit_cli::run(std::env::args_os()));
}
