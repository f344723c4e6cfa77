fn main() {
    std::process::exit(kvc_cli::run(std::env::args_os()));
}
