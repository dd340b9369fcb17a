fn main() {
    std::process::exit(charnet_cli::run(std::env::args_os()));
}
